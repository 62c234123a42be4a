//! Inhalation/exhalation disambiguation.
//!
//! Across a run of adjacent subcarriers the static amplitude either falls with
//! frequency (the path phase sits in `(0, π)`, amplitude rises on inhalation)
//! or rises (phase in `(π, 2π)`, amplitude falls on inhalation). The slope of
//! a straight-line fit to that cross-frequency profile tells which, and the
//! group the run came from tells whether the fused waveform needs flipping.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::grouping::Partition;
use crate::sim::CaseLabel;
use crate::trace::{SignConvention, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceGroup {
    Group1,
    Group2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDecision {
    /// Original subcarrier indices of the run used for the trend.
    pub contiguous_set: Vec<usize>,
    pub slope_a1: f64,
    pub intercept_a2: f64,
    pub source_group: SourceGroup,
    pub case: CaseLabel,
    pub flipped: bool,
}

/// Longest runs of consecutive values in a sorted index list, as
/// `(start position, length)` pairs.
fn runs(indices: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=indices.len() {
        if i == indices.len() || indices[i] != indices[i - 1] + 1 {
            out.push((start, i - start));
            start = i;
        }
    }
    out
}

/// Longest run of consecutive original subcarrier indices drawn from a single
/// group. Ties go to the lower starting index, then to group 1.
///
/// `part` holds positions into `index_map`; the returned set holds original
/// subcarrier indices.
pub fn longest_contiguous(part: &Partition, index_map: &[usize]) -> Result<(Vec<usize>, SourceGroup)> {
    let mut best: Option<(Vec<usize>, SourceGroup)> = None;
    for (members, group) in [(&part.group1, SourceGroup::Group1), (&part.group2, SourceGroup::Group2)] {
        let mut idx: Vec<usize> = members.iter().map(|&r| index_map[r]).collect();
        idx.sort_unstable();
        for (s, len) in runs(&idx) {
            let run = idx[s..s + len].to_vec();
            let better = match &best {
                None => true,
                Some((b, _)) => len > b.len() || (len == b.len() && run[0] < b[0]),
            };
            if better {
                best = Some((run, group));
            }
        }
    }
    best.ok_or(Error::EmptyPartition)
}

/// Time-averaged, Gaussian-smoothed cross-subcarrier amplitude profile.
///
/// `amplitudes` is `|K^s| × L` in frequency order. Smoothing is linear, so
/// the profile is smoothed once after averaging over time; the result equals
/// the average of per-instant smoothed profiles.
pub fn frequency_profile(amplitudes: &Array2<f64>, sigma: f64) -> Result<Vec<f64>> {
    let k = amplitudes.nrows();
    if k < 3 {
        return Err(Error::SetTooSmall { got: k });
    }
    let avg: Vec<f64> = amplitudes.rows().into_iter().map(|r| r.sum() / r.len() as f64).collect();
    Ok(dsp::gaussian_smooth(&avg, sigma))
}

/// Classify the run by the slope of its profile and orient `w_in` so that a
/// rising waveform means inhalation.
pub fn identify_and_orient(
    w_in: &Waveform,
    profile: &[f64],
    contiguous_set: &[usize],
    source_group: SourceGroup,
) -> Result<(Waveform, PhaseDecision)> {
    if w_in.sign_convention != SignConvention::Ambiguous {
        return Err(Error::InvalidValue("waveform is already oriented".into()));
    }
    if profile.len() < 3 {
        return Err(Error::SetTooSmall { got: profile.len() });
    }
    let (a1, a2) = dsp::linfit(profile);
    let scale = profile.iter().map(|v| v.abs()).sum::<f64>() / profile.len() as f64;
    if !a1.is_finite() || a1.abs() < 1e-6 * scale || a1 == 0.0 {
        return Err(Error::AmbiguousTrend);
    }
    let case = if a1 > 0.0 { CaseLabel::Case2 } else { CaseLabel::Case1 };
    let flipped = matches!(
        (case, source_group),
        (CaseLabel::Case2, SourceGroup::Group1) | (CaseLabel::Case1, SourceGroup::Group2)
    );
    let mut out = if flipped { w_in.negated() } else { w_in.clone() };
    out.sign_convention = SignConvention::Oriented;
    Ok((
        out,
        PhaseDecision {
            contiguous_set: contiguous_set.to_vec(),
            slope_a1: a1,
            intercept_a2: a2,
            source_group,
            case,
            flipped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_trace, SceneSpec};
    use ndarray::Axis;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn part(g1: &[usize], g2: &[usize]) -> Partition {
        Partition { group1: g1.to_vec(), group2: g2.to_vec(), scores: vec![], discarded: vec![] }
    }

    fn identity(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    fn ambiguous(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 10.0, 0.0, SignConvention::Ambiguous).unwrap()
    }

    #[test]
    fn contiguous_run_examples() {
        let (s, g) = longest_contiguous(&part(&[3, 4, 5], &[9]), &identity(10)).unwrap();
        assert_eq!((s, g), (vec![3, 4, 5], SourceGroup::Group1));
        let (s, g) = longest_contiguous(&part(&[1, 2], &[5, 6, 7, 8]), &identity(10)).unwrap();
        assert_eq!((s, g), (vec![5, 6, 7, 8], SourceGroup::Group2));
        let (s, g) = longest_contiguous(&part(&[10, 11, 12, 13], &[2, 3, 4, 5]), &identity(20)).unwrap();
        assert_eq!((s, g), (vec![2, 3, 4, 5], SourceGroup::Group2));
        let (s, g) = longest_contiguous(&part(&[0, 2], &[1, 3]), &identity(4)).unwrap();
        assert_eq!((s, g), (vec![0], SourceGroup::Group1));
        assert!(matches!(longest_contiguous(&part(&[], &[]), &[]), Err(Error::EmptyPartition)));
    }

    #[test]
    fn runs_follow_original_indices() {
        // Rows 0..4 map to subcarriers with a gap between 11 and 20.
        let map = [10, 11, 20, 21, 22];
        let (s, g) = longest_contiguous(&part(&[0, 1, 2, 3, 4], &[]), &map).unwrap();
        assert_eq!((s, g), (vec![20, 21, 22], SourceGroup::Group1));
    }

    #[test]
    fn profile_needs_three_members() {
        let a = Array2::from_elem((2, 10), 1.0);
        assert!(matches!(frequency_profile(&a, 2.0), Err(Error::SetTooSmall { got: 2 })));
    }

    #[test]
    fn constant_amplitudes_give_smoothed_static_profile() {
        let stat = [1.0, 1.5, 1.7, 2.4, 2.5, 3.1];
        let a = Array2::from_shape_fn((6, 50), |(k, _)| stat[k]);
        let p = frequency_profile(&a, 2.0).unwrap();
        let want = dsp::gaussian_smooth(&stat, 2.0);
        for (x, y) in p.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_first_matches_per_instant_smoothing() {
        let a = Array2::from_shape_fn((9, 40), |(k, t)| ((k * 7 + t * 3) % 11) as f64 + 0.1 * k as f64);
        let fast = frequency_profile(&a, 2.0).unwrap();
        let mut literal = vec![0.0; 9];
        for col in a.axis_iter(Axis(1)) {
            for (l, v) in literal.iter_mut().zip(dsp::gaussian_smooth(&col.to_vec(), 2.0)) {
                *l += v / 40.0;
            }
        }
        for (x, y) in fast.iter().zip(&literal) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn centred_scene(theta_centre: f64) -> SceneSpec {
        let mut scene = SceneSpec { noise_snr_db: None, ..SceneSpec::default() };
        scene.bandwidth_hz = 20e6;
        let (lo, hi) = scene.theta_interval(scene.center_freq_hz);
        scene.vartheta_rad += theta_centre - 0.5 * (lo + hi);
        scene
    }

    fn profile_of(scene: &SceneSpec) -> Vec<f64> {
        let (trace, _) = simulate_trace(scene, 12.0, 50.0, 16, 0).unwrap();
        frequency_profile(&trace.amplitudes().t().to_owned(), 2.0).unwrap()
    }

    #[test]
    fn case1_profile_decreases_and_case2_increases() {
        // Amplitude is decreasing in θ on (0, π) and θ grows with frequency
        // because the chest path is the longer one.
        let p = profile_of(&centred_scene(0.5 * PI));
        assert!(p.windows(2).all(|w| w[1] < w[0]));
        let p = profile_of(&centred_scene(1.5 * PI));
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn decision_table() {
        let w = ambiguous(vec![0.0, 1.0, 0.0, -1.0]);
        let up = [1.0, 2.0, 3.0, 4.0];
        let down = [4.0, 3.0, 2.0, 1.0];
        let cases = [
            (&up, SourceGroup::Group1, CaseLabel::Case2, true),
            (&down, SourceGroup::Group1, CaseLabel::Case1, false),
            (&up, SourceGroup::Group2, CaseLabel::Case2, false),
            (&down, SourceGroup::Group2, CaseLabel::Case1, true),
        ];
        for (prof, group, case, flipped) in cases {
            let (out, d) = identify_and_orient(&w, prof, &[0, 1, 2, 3], group).unwrap();
            assert_eq!((d.case, d.flipped), (case, flipped));
            assert_eq!(out.sign_convention, SignConvention::Oriented);
            let expect = if flipped { -1.0 } else { 1.0 };
            assert_eq!(out.samples[1], expect);
        }
    }

    #[test]
    fn flat_profile_is_ambiguous() {
        let w = ambiguous(vec![0.0, 1.0, 0.0, -1.0]);
        let flat = [2.0, 2.0 + 1e-9, 2.0, 2.0 + 1e-9];
        assert!(matches!(
            identify_and_orient(&w, &flat, &[0, 1, 2, 3], SourceGroup::Group1),
            Err(Error::AmbiguousTrend)
        ));
    }

    #[test]
    fn oriented_input_is_rejected() {
        let mut w = ambiguous(vec![0.0, 1.0, 0.0, -1.0]);
        w.sign_convention = SignConvention::Oriented;
        assert!(identify_and_orient(&w, &[1.0, 2.0, 3.0], &[0, 1, 2], SourceGroup::Group1).is_err());
    }

    proptest! {
        #[test]
        fn positive_scaling_keeps_decision(
            prof in proptest::collection::vec(0.1f64..10.0, 3..30),
            c in 1e-3f64..1e3,
            g2 in any::<bool>(),
        ) {
            let w = ambiguous(vec![0.0, 1.0, -1.0]);
            let group = if g2 { SourceGroup::Group2 } else { SourceGroup::Group1 };
            let set: Vec<usize> = (0..prof.len()).collect();
            let scaled: Vec<f64> = prof.iter().map(|v| v * c).collect();
            let a = identify_and_orient(&w, &prof, &set, group);
            let b = identify_and_orient(&w, &scaled, &set, group);
            match (a, b) {
                (Ok((_, da)), Ok((_, db))) => {
                    prop_assert_eq!(da.case, db.case);
                    prop_assert_eq!(da.flipped, db.flipped);
                }
                (Err(Error::AmbiguousTrend), Err(Error::AmbiguousTrend)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a.map(|x| x.1), b.map(|x| x.1)),
            }
        }
    }
}
