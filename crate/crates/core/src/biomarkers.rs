//! Breath segmentation and the per-window respiratory biomarkers.
//!
//! Breaths are trough-to-peak-to-trough triples on the oriented waveform.
//! Tidal-volume variability is a proxy: the variance of per-breath excursions
//! of the normalized waveform, not a volume in liters.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::trace::{SignConvention, Waveform, MIN_DURATION_S};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams {
    pub min_dist_s: f64,
    /// Minimum prominence as a fraction of the waveform's range.
    pub prominence_frac: f64,
    /// Extrema closer than this to either end of the window are ignored;
    /// smoothing there runs on one-sided data and shifts them.
    pub edge_guard_s: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self { min_dist_s: 2.0, prominence_frac: 0.10, edge_guard_s: 0.0 }
    }
}

/// One extremum with sub-sample time and value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub time_s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breath {
    pub trough: Extremum,
    pub peak: Extremum,
    pub next_trough: Extremum,
}

impl Breath {
    pub fn inhale_s(&self) -> f64 {
        self.peak.time_s - self.trough.time_s
    }

    pub fn exhale_s(&self) -> f64 {
        self.next_trough.time_s - self.peak.time_s
    }

    /// Peak value minus the mean of the flanking troughs.
    pub fn excursion(&self) -> f64 {
        self.peak.value - 0.5 * (self.trough.value + self.next_trough.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreathSegmentation {
    pub peaks: Vec<Extremum>,
    pub troughs: Vec<Extremum>,
    pub breaths: Vec<Breath>,
}

impl BreathSegmentation {
    pub fn peak_times_s(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.time_s).collect()
    }

    pub fn trough_times_s(&self) -> Vec<f64> {
        self.troughs.iter().map(|p| p.time_s).collect()
    }
}

/// Indices of local maxima; a flat top reports its middle sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence: height above the higher of the two lowest points
/// reached before meeting a higher sample on either side.
fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for &v in x[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Local maxima passing the prominence gate, then thinned so no two are
/// closer than `min_dist` samples (taller peaks win).
pub fn find_peaks(x: &[f64], min_dist: usize, min_prominence: f64) -> Vec<usize> {
    let cand: Vec<usize> = local_maxima(x).into_iter().filter(|&p| prominence(x, p) >= min_prominence).collect();
    let mut order: Vec<usize> = (0..cand.len()).collect();
    order.sort_by(|&a, &b| x[cand[b]].total_cmp(&x[cand[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; cand.len()];
    for &o in &order {
        if !keep[o] {
            continue;
        }
        for (j, k) in keep.iter_mut().enumerate() {
            if j != o && cand[j].abs_diff(cand[o]) < min_dist {
                *k = false;
            }
        }
    }
    cand.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

/// Parabolic refinement through the sample and its neighbours.
fn refine(w: &Waveform, i: usize) -> Extremum {
    let x = &w.samples;
    let mut e = Extremum { index: i, time_s: w.time_of(i), value: x[i] };
    if i == 0 || i + 1 >= x.len() {
        return e;
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom != 0.0 {
        let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        e.time_s += delta / w.sample_rate_hz;
        e.value = b - 0.25 * (a - c) * delta;
    }
    e
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Peak,
    Trough,
}

/// Detect peaks and troughs and pair them into breaths.
pub fn detect_breaths(w: &Waveform, params: &PeakParams) -> Result<BreathSegmentation> {
    let needed = (MIN_DURATION_S * w.sample_rate_hz).ceil() as usize;
    if w.len() < needed {
        return Err(Error::TooShort { needed, got: w.len() });
    }
    let x = &w.samples;
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::NoBreathsFound);
    }
    let min_dist = (params.min_dist_s * w.sample_rate_hz).round().max(1.0) as usize;
    let min_prom = params.prominence_frac * range;
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();

    let mut ext: Vec<(usize, Kind)> = find_peaks(x, min_dist, min_prom)
        .into_iter()
        .map(|i| (i, Kind::Peak))
        .chain(find_peaks(&neg, min_dist, min_prom).into_iter().map(|i| (i, Kind::Trough)))
        .collect();
    let guard = (params.edge_guard_s * w.sample_rate_hz).round() as usize;
    ext.retain(|e| e.0 >= guard && e.0 + guard < x.len());
    ext.sort_by_key(|e| e.0);

    // Among adjacent extrema of the same kind keep the more extreme one.
    let mut alt: Vec<(usize, Kind)> = Vec::with_capacity(ext.len());
    for e in ext {
        match alt.last() {
            Some(&(j, k)) if k == e.1 => {
                let replace = match k {
                    Kind::Peak => x[e.0] > x[j],
                    Kind::Trough => x[e.0] < x[j],
                };
                if replace {
                    *alt.last_mut().unwrap() = e;
                }
            }
            _ => alt.push(e),
        }
    }

    let peaks: Vec<Extremum> = alt.iter().filter(|e| e.1 == Kind::Peak).map(|e| refine(w, e.0)).collect();
    let troughs: Vec<Extremum> = alt.iter().filter(|e| e.1 == Kind::Trough).map(|e| refine(w, e.0)).collect();
    if peaks.len() < 2 {
        return Err(Error::NoBreathsFound);
    }
    let breaths = alt
        .windows(3)
        .filter(|t| t[0].1 == Kind::Trough)
        .map(|t| Breath { trough: refine(w, t[0].0), peak: refine(w, t[1].0), next_trough: refine(w, t[2].0) })
        .collect();
    Ok(BreathSegmentation { peaks, troughs, breaths })
}

/// Move every extremum of `seg` to the matching extremum of `w` within
/// `radius_s`, keeping the breath structure. Used to read breath timing and
/// depth off a less smoothed copy of the waveform the segmentation came from.
///
/// The snapped extremum is the apex of two half-parabolas fitted to `w`, one
/// on each side, each spanning a quarter of the gap to the neighbouring
/// extremum. A lone noisy sample would drift toward the flatter side of an
/// asymmetric breath; the fit does not. Falls back to the raw sample maximum
/// when the fit is unusable, and a zero radius only re-reads values in place.
pub fn snap_to(seg: &BreathSegmentation, w: &Waveform, radius_s: f64) -> BreathSegmentation {
    let x = &w.samples;
    let r = (radius_s * w.sample_rate_hz).round() as usize;
    let mut anchors: Vec<usize> = seg.peaks.iter().chain(&seg.troughs).map(|e| e.index).collect();
    anchors.sort_unstable();
    anchors.dedup();
    let snap = |e: &Extremum, kind: Kind| -> Extremum {
        if x.is_empty() {
            return *e;
        }
        let lo = e.index.saturating_sub(r);
        let hi = (e.index + r).min(x.len() - 1);
        let pick = (lo..=hi).fold(e.index.min(x.len() - 1), |best, i| {
            let better = match kind {
                Kind::Peak => x[i] > x[best],
                Kind::Trough => x[i] < x[best],
            };
            if better {
                i
            } else {
                best
            }
        });
        if r == 0 {
            return refine(w, pick);
        }
        let pos = anchors.partition_point(|&a| a < e.index);
        let before = pos.checked_sub(1).map(|p| e.index - anchors[p]);
        let after = anchors.get(pos + usize::from(anchors.get(pos) == Some(&e.index))).map(|&a| a - e.index);
        let (Some(gl), Some(gr)) = (before.or(after), after.or(before)) else {
            return refine(w, pick);
        };
        let (hl, hr) = ((gl / 4).min(r), (gr / 4).min(r));
        apex_fit(w, lo, hi, hl, hr, kind).unwrap_or_else(|| refine(w, pick))
    };
    BreathSegmentation {
        peaks: seg.peaks.iter().map(|e| snap(e, Kind::Peak)).collect(),
        troughs: seg.troughs.iter().map(|e| snap(e, Kind::Trough)).collect(),
        breaths: seg
            .breaths
            .iter()
            .map(|b| Breath {
                trough: snap(&b.trough, Kind::Trough),
                peak: snap(&b.peak, Kind::Peak),
                next_trough: snap(&b.next_trough, Kind::Trough),
            })
            .collect(),
    }
}

/// Least-squares fit of `v + p·u²` left of the apex and `v + q·u²` right of
/// it over `hl` samples before and `hr` after. Every apex in `lo..=hi` is
/// tried with its window moving along, the best is refined between grid
/// points.
fn apex_fit(w: &Waveform, lo: usize, hi: usize, hl: usize, hr: usize, kind: Kind) -> Option<Extremum> {
    const MIN_SIDE: usize = 3;
    let x = &w.samples;
    if hl.min(hr) < MIN_SIDE {
        return None;
    }
    // (sse, v, p, q) for the window centred on sample `c` and an apex at `t0`.
    let fit = |c: usize, t0: f64| -> Option<(f64, f64, f64, f64)> {
        let (a, b) = (c.checked_sub(hl)?, c + hr);
        let seg = x.get(a..=b)?;
        let (mut n, mut sy) = (0.0, 0.0);
        let (mut s2l, mut s4l, mut syl) = (0.0, 0.0, 0.0);
        let (mut s2r, mut s4r, mut syr) = (0.0, 0.0, 0.0);
        for (k, &y) in seg.iter().enumerate() {
            let u = (a + k) as f64 - t0;
            let u2 = u * u;
            n += 1.0;
            sy += y;
            if u < 0.0 {
                s2l += u2;
                s4l += u2 * u2;
                syl += y * u2;
            } else {
                s2r += u2;
                s4r += u2 * u2;
                syr += y * u2;
            }
        }
        if s4l == 0.0 || s4r == 0.0 {
            return None;
        }
        let denom = n - s2l * s2l / s4l - s2r * s2r / s4r;
        if denom.abs() < 1e-12 {
            return None;
        }
        let v = (sy - s2l * syl / s4l - s2r * syr / s4r) / denom;
        let p = (syl - s2l * v) / s4l;
        let q = (syr - s2r * v) / s4r;
        let sse = seg
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let u = (a + k) as f64 - t0;
                let c = if u < 0.0 { p } else { q };
                (y - v - c * u * u).powi(2)
            })
            .sum();
        Some((sse, v, p, q))
    };
    let (best, _) = (lo..=hi).filter_map(|c| fit(c, c as f64).map(|f| (c, f.0))).min_by(|a, b| a.1.total_cmp(&b.1))?;
    let mut t0 = best as f64;
    let around = (fit(best, t0 - 1.0), fit(best, t0), fit(best, t0 + 1.0));
    if let (Some(a), Some(b), Some(c)) = around {
        let curv = a.0 - 2.0 * b.0 + c.0;
        if curv > 0.0 {
            t0 += (0.5 * (a.0 - c.0) / curv).clamp(-0.5, 0.5);
        }
    }
    let (_, v, p, q) = fit(best, t0)?;
    let shaped = match kind {
        Kind::Peak => p < 0.0 && q < 0.0,
        Kind::Trough => p > 0.0 && q > 0.0,
    };
    shaped.then(|| Extremum { index: t0.round() as usize, time_s: w.start_s + t0 / w.sample_rate_hz, value: v })
}

/// Breaths per minute from the mean peak-to-peak interval.
pub fn respiratory_rate(seg: &BreathSegmentation) -> Result<f64> {
    let n = seg.peaks.len();
    if n < 2 {
        return Err(Error::NoBreathsFound);
    }
    let mean_interval = (seg.peaks[n - 1].time_s - seg.peaks[0].time_s) / (n - 1) as f64;
    Ok(60.0 / mean_interval)
}

/// Mean over breaths of inhale duration over exhale duration.
pub fn ie_ratio(w: &Waveform, seg: &BreathSegmentation) -> Result<f64> {
    if w.sign_convention != SignConvention::Oriented {
        return Err(Error::PhaseUnresolved);
    }
    if seg.breaths.is_empty() {
        return Err(Error::NoBreathsFound);
    }
    let total: f64 = seg.breaths.iter().map(|b| b.inhale_s() / b.exhale_s()).sum();
    Ok(total / seg.breaths.len() as f64)
}

/// Population variance of per-breath excursions.
pub fn tv_variability(seg: &BreathSegmentation) -> Result<f64> {
    if seg.breaths.len() < 2 {
        return Err(Error::NoBreathsFound);
    }
    let ex: Vec<f64> = seg.breaths.iter().map(Breath::excursion).collect();
    Ok(dsp::variance(&ex))
}

pub const APEN_MIN_LEN: usize = 50;

/// Approximate entropy with embedding `m`, tolerance `r_frac` times the
/// population standard deviation, Chebyshev distance and self-matches.
pub fn apen(x: &[f64], m: usize, r_frac: f64) -> Result<f64> {
    let n = x.len();
    if n < APEN_MIN_LEN.max(m + 2) {
        return Err(Error::TooShort { needed: APEN_MIN_LEN.max(m + 2), got: n });
    }
    let r = r_frac * dsp::variance(x).sqrt();
    // counts_m[i]: templates of length m within r of template i (i < n-m+1);
    // counts_m1 likewise for length m+1 (i < n-m).
    let nm = n - m + 1;
    let mut counts_m = vec![1usize; nm];
    let mut counts_m1 = vec![1usize; nm - 1];
    for i in 0..nm {
        for j in i + 1..nm {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                counts_m[i] += 1;
                counts_m[j] += 1;
                if j < nm - 1 && (x[i + m] - x[j + m]).abs() <= r {
                    counts_m1[i] += 1;
                    counts_m1[j] += 1;
                }
            }
        }
    }
    let phi = |counts: &[usize]| {
        let len = counts.len() as f64;
        counts.iter().map(|&c| (c as f64 / len).ln()).sum::<f64>() / len
    };
    Ok((phi(&counts_m) - phi(&counts_m1)).max(0.0))
}
