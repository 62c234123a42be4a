//! Subcarrier grouping and fusion.
//!
//! Retained subcarriers are compared by cosine similarity, the similarity
//! matrix is discretized to {-1, 0, 1}, and a signed-Laplacian spectral cut
//! splits them into two opposite-trend groups. A per-subcarrier score then
//! drops weakly attached members, the second group is sign-flipped and
//! everything left is averaged.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::preprocess::WaveformMatrix;
use crate::trace::{SignConvention, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    /// Cosine similarities, symmetric with unit diagonal.
    pub w: Array2<f64>,
    /// Ternary discretization of `w`.
    pub w_disc: Array2<i8>,
    pub sim_threshold: f64,
}

impl SimilarityGraph {
    pub fn from_similarity(w: Array2<f64>, sim_threshold: f64) -> Self {
        let w_disc = discretize(&w, sim_threshold);
        Self { w, w_disc, sim_threshold }
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }
}

pub fn discretize(w: &Array2<f64>, threshold: f64) -> Array2<i8> {
    w.mapv(|v| {
        if v >= threshold {
            1
        } else if v <= -threshold {
            -1
        } else {
            0
        }
    })
}

/// Pairwise cosine similarity of the rows of `gm`.
pub fn build_similarity(gm: &WaveformMatrix, sim_threshold: f64) -> Result<SimilarityGraph> {
    let n = gm.n_rows();
    if n == 0 {
        return Err(Error::EmptyPartition);
    }
    let gram = gm.g.dot(&gm.g.t());
    let norms: Vec<f64> = (0..n).map(|i| gram[[i, i]].sqrt()).collect();
    if norms.contains(&0.0) {
        return Err(Error::ZeroNorm);
    }
    let w = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            1.0
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            (gram[[a, b]] / (norms[a] * norms[b])).clamp(-1.0, 1.0)
        }
    });
    Ok(SimilarityGraph::from_similarity(w, sim_threshold))
}

/// `xᵀ W x` for labels `x ∈ {±1}` (`true` = +1). Equals the partition
/// objective: within-group similarity minus across-group similarity.
pub fn objective<T: Copy + Into<f64>>(w: &Array2<T>, in_group1: &[bool]) -> f64 {
    let s = |b: bool| if b { 1.0 } else { -1.0 };
    let mut total = 0.0;
    for ((i, j), v) in w.indexed_iter() {
        total += s(in_group1[i]) * s(in_group1[j]) * (*v).into();
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
    /// The ternary graph had no edges; everything went to group 1.
    pub degenerate: bool,
}

impl Bipartition {
    pub fn labels(&self, n: usize) -> Vec<bool> {
        let mut x = vec![true; n];
        for &k in &self.group2 {
            x[k] = false;
        }
        x
    }

    fn from_labels(x: &[bool], degenerate: bool) -> Self {
        let (g1, g2): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&k| x[k]);
        Self { group1: g1, group2: g2, degenerate }
    }
}

/// Eigenvector of the smallest eigenvalue of the signed Laplacian restricted
/// to `active` nodes.
fn signed_fiedler(w_disc: &Array2<i8>, active: &[usize]) -> Vec<f64> {
    let m = active.len();
    let mut lap = DMatrix::<f64>::zeros(m, m);
    for (a, &i) in active.iter().enumerate() {
        let mut degree = 0.0;
        for (b, &j) in active.iter().enumerate() {
            if a != b {
                let v = w_disc[[i, j]] as f64;
                lap[(a, b)] = -v;
                degree += v.abs();
            }
        }
        lap[(a, a)] = degree;
    }
    let eig = SymmetricEigen::new(lap);
    let mut best = 0;
    for k in 1..m {
        if eig.eigenvalues[k] < eig.eigenvalues[best] {
            best = k;
        }
    }
    eig.eigenvectors.column(best).iter().copied().collect()
}

/// Single-node moves that raise `xᵀWx`, steepest first, until none remain.
fn polish(w_disc: &Array2<i8>, x: &mut [bool]) {
    let n = x.len();
    let s = |b: bool| if b { 1i64 } else { -1 };
    let mut field: Vec<i64> =
        (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| w_disc[[i, j]] as i64 * s(x[j])).sum()).collect();
    for _ in 0..10 * n {
        // Flipping i changes the objective by -4·x_i·field_i.
        let mut best: Option<(usize, i64)> = None;
        for i in 0..n {
            let gain = -4 * s(x[i]) * field[i];
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        let old = s(x[i]);
        x[i] = !x[i];
        for (j, f) in field.iter_mut().enumerate() {
            if j != i {
                *f += w_disc[[j, i]] as i64 * (-2 * old);
            }
        }
    }
}

/// Signed spectral bi-partition of the ternary similarity graph.
///
/// Nodes without any nonzero edge are placed in group 1. The cut from the
/// Laplacian eigenvector is polished with improving single-node moves, and
/// labels are oriented so the lowest-index connected node is in group 1.
pub fn partition(graph: &SimilarityGraph) -> Bipartition {
    let n = graph.len();
    let wd = &graph.w_disc;
    let active: Vec<usize> = (0..n).filter(|&i| (0..n).any(|j| j != i && wd[[i, j]] != 0)).collect();
    if active.is_empty() {
        return Bipartition::from_labels(&vec![true; n], n > 1);
    }
    let v = signed_fiedler(wd, &active);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pivot = v.iter().position(|x| x.abs() > 1e-12 * scale).unwrap_or(0);
    let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
    let mut x = vec![true; n];
    for (a, &i) in active.iter().enumerate() {
        let c = sign * v[a];
        x[i] = c >= 0.0 || c.abs() <= 1e-12 * scale;
    }
    polish(wd, &mut x);
    let all_one = vec![true; n];
    if objective(wd, &x) < objective(wd, &all_one) {
        x = all_one;
    }
    if !x[active[0]] {
        x.iter_mut().for_each(|b| *b = !*b);
    }
    Bipartition::from_labels(&x, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
    /// Score per node (indexed like the similarity matrix).
    pub scores: Vec<f64>,
    pub discarded: Vec<usize>,
}

impl Partition {
    pub fn kept(&self) -> usize {
        self.group1.len() + self.group2.len()
    }
}

/// Score each node by similarity to its own group minus similarity to the
/// other, then keep members scoring at least `keep_fraction` of their
/// group's best positive score (always keeping the best).
pub fn refine(graph: &SimilarityGraph, cut: &Bipartition, keep_fraction: f64) -> Partition {
    let n = graph.len();
    let x = cut.labels(n);
    let scores: Vec<f64> = (0..n)
        .map(|k| {
            (0..n).filter(|&j| j != k).map(|j| if x[j] == x[k] { graph.w[[k, j]] } else { -graph.w[[k, j]] }).sum()
        })
        .collect();
    let mut discarded = Vec::new();
    let mut keep_group = |members: &[usize]| -> Vec<usize> {
        let Some(&best) = members.iter().max_by(|a, b| scores[**a].total_cmp(&scores[**b]).then(b.cmp(a))) else {
            return Vec::new();
        };
        let top = scores[best];
        let kept: Vec<usize> = if top > 0.0 {
            let cutoff = keep_fraction * top;
            members.iter().copied().filter(|&k| scores[k] >= cutoff).collect()
        } else {
            vec![best]
        };
        discarded.extend(members.iter().copied().filter(|k| !kept.contains(k)));
        kept
    };
    let group1 = keep_group(&cut.group1);
    let group2 = keep_group(&cut.group2);
    discarded.sort_unstable();
    Partition { group1, group2, scores, discarded }
}

/// Flip group 2, average every kept row, re-normalize.
pub fn align_and_fuse(gm: &WaveformMatrix, part: &Partition) -> Result<Waveform> {
    if part.group1.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let l = gm.n_samples();
    let mut acc = vec![0.0; l];
    for (&k, sign) in part.group1.iter().map(|k| (k, 1.0)).chain(part.group2.iter().map(|k| (k, -1.0))) {
        for (a, v) in acc.iter_mut().zip(gm.g.row(k)) {
            *a += sign * v;
        }
    }
    let fused = dsp::zscore(&acc)?;
    Waveform::new(fused, gm.sample_rate_hz, 0.0, SignConvention::Ambiguous)
}
