//! Accuracy and agreement metrics against ground truth.

use serde::{Deserialize, Serialize};

use crate::biomarkers::{self, PeakParams};
use crate::dsp;
use crate::error::{Error, Result};
use crate::trace::{GroundTruthTrace, Report, SignConvention, Waveform};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    Ok(())
}

pub fn mae(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(est, truth)?;
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum::<f64>() / est.len() as f64)
}

pub fn mse(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(est, truth)?;
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / est.len() as f64)
}

/// Pearson correlation coefficient.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let mx = dsp::mean(x);
    let my = dsp::mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub mean_bias: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub pct_within_loa: f64,
    pub n: usize,
}

/// Bland-Altman agreement of `a` against `b` (sample SD of the differences).
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<AgreementStats> {
    check_pair(a, b)?;
    if a.len() < 3 {
        return Err(Error::TooFew { needed: 3, got: a.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let bias = dsp::mean(&d);
    let sd = (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let loa_low = bias - 1.96 * sd;
    let loa_high = bias + 1.96 * sd;
    let within = d.iter().filter(|v| **v >= loa_low && **v <= loa_high).count();
    Ok(AgreementStats {
        mean_bias: bias,
        sd_diff: sd,
        loa_low,
        loa_high,
        pct_within_loa: 100.0 * within as f64 / n,
        n: d.len(),
    })
}

pub const MIN_OVERLAP_S: f64 = 10.0;
pub const DEFAULT_MAX_LAG_S: f64 = 1.0;

/// Linear interpolation of `(t, y)` at `at`; `t` must be increasing.
fn interp(t: &[f64], y: &[f64], at: f64) -> f64 {
    let i = t.partition_point(|v| *v <= at);
    if i == 0 {
        return y[0];
    }
    if i >= t.len() {
        return y[t.len() - 1];
    }
    let (t0, t1) = (t[i - 1], t[i]);
    y[i - 1] + (at - t0) / (t1 - t0) * (y[i] - y[i - 1])
}

/// Aligned, z-scored pair for waveform correlation, with the lag that was
/// applied (seconds; positive means the waveform trails the truth).
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    pub lag_s: f64,
    pub pcc: f64,
}

pub fn align_for_pcc(w: &Waveform, truth: &GroundTruthTrace) -> Result<Aligned> {
    align_for_pcc_with(w, truth, DEFAULT_MAX_LAG_S)
}

/// Resample the truth onto the waveform's grid over the shared time range,
/// then pick the integer-sample lag within `±max_lag_s` maximizing PCC.
pub fn align_for_pcc_with(w: &Waveform, truth: &GroundTruthTrace, max_lag_s: f64) -> Result<Aligned> {
    let ts = truth.timestamps_s();
    if w.is_empty() || ts.is_empty() {
        return Err(Error::NoOverlap);
    }
    let lo = w.start_s.max(ts[0]);
    let hi = w.time_of(w.len() - 1).min(ts[ts.len() - 1]);
    if hi - lo < MIN_OVERLAP_S {
        return Err(Error::NoOverlap);
    }
    let fs = w.sample_rate_hz;
    let first = ((lo - w.start_s) * fs - 1e-9).ceil().max(0.0) as usize;
    let last = (((hi - w.start_s) * fs + 1e-9).floor() as usize).min(w.len() - 1);
    let est = &w.samples[first..=last];
    let max_lag = (max_lag_s * fs).round() as isize;

    // Waveform sample i is paired with the truth at time t_i - lag.
    let paired = |lag: isize| -> (Vec<f64>, Vec<f64>) {
        let shift = lag as f64 / fs;
        (0..est.len())
            .filter_map(|i| {
                let t = w.time_of(first + i) - shift;
                (t >= ts[0] - 1e-9 && t <= ts[ts.len() - 1] + 1e-9)
                    .then(|| (est[i], interp(ts, truth.displacement(), t)))
            })
            .unzip()
    };
    let mut best: Option<(isize, f64)> = None;
    for lag in -max_lag..=max_lag {
        let (x, y) = paired(lag);
        if (x.len() as f64) < MIN_OVERLAP_S * fs {
            continue;
        }
        let Ok(r) = pcc(&x, &y) else { continue };
        let better = match best {
            None => true,
            Some((bl, br)) => r > br + 1e-12 || ((r - br).abs() <= 1e-12 && lag.abs() < bl.abs()),
        };
        if better {
            best = Some((lag, r));
        }
    }
    let (lag, r) = best.ok_or(Error::NoOverlap)?;
    let (x, y) = paired(lag);
    Ok(Aligned { estimate: dsp::zscore(&x)?, truth: dsp::zscore(&y)?, lag_s: lag as f64 / fs, pcc: r })
}

/// Biomarkers measured on the reference displacement with the same
/// estimators the pipeline uses, after z-scoring the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthBiomarkers {
    pub rr_bpm: Option<f64>,
    pub ie_ratio: Option<f64>,
    pub tv_variability: Option<f64>,
    pub apen: Option<f64>,
}

pub fn truth_biomarkers(
    truth: &GroundTruthTrace,
    start_s: f64,
    len_s: f64,
    peaks: impl Fn(usize, f64) -> PeakParams,
) -> Result<TruthBiomarkers> {
    let (t, d) = truth.span(start_s, len_s);
    if t.len() < 2 {
        return Err(Error::NoOverlap);
    }
    let fs = (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
    let w = Waveform::new(dsp::zscore(&d)?, fs, t[0], SignConvention::Oriented)?;
    let mut out = TruthBiomarkers { apen: biomarkers::apen(&w.samples, 2, 0.2).ok(), ..Default::default() };
    if let Ok(seg) = biomarkers::detect_breaths(&w, &peaks(w.len(), fs)) {
        out.rr_bpm = biomarkers::respiratory_rate(&seg).ok();
        out.ie_ratio = biomarkers::ie_ratio(&w, &seg).ok();
        out.tv_variability = biomarkers::tv_variability(&seg).ok();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerAgreement {
    pub rr_bpm: Option<AgreementStats>,
    pub ie_ratio: Option<AgreementStats>,
    pub tv_variability: Option<AgreementStats>,
    pub apen: Option<AgreementStats>,
}

/// Run-level comparison against ground truth. Each metric covers the
/// windows where both the estimate and the reference exist; `None` when
/// there are none (or fewer than three for Bland-Altman).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_windows: usize,
    pub n_degraded: usize,
    pub rr_mae_bpm: Option<f64>,
    /// Mean PCC over windows; ambiguous waveforms count by magnitude.
    pub waveform_pcc: Option<f64>,
    pub ie_mse: Option<f64>,
    pub tvv_mse: Option<f64>,
    pub apen_mse: Option<f64>,
    pub bland_altman: BiomarkerAgreement,
}

/// Compare a run's report and waveforms with the reference. `peaks` gives
/// the segmentation parameters for a window of `(samples, rate)`.
pub fn evaluate(
    waveforms: &[Waveform],
    report: &Report,
    truth: &GroundTruthTrace,
    peaks: impl Fn(usize, f64) -> PeakParams,
) -> Result<Evaluation> {
    let mut pairs: [(Vec<f64>, Vec<f64>); 4] = Default::default();
    for w in &report.windows {
        let Ok(tb) = truth_biomarkers(truth, w.window_start_s, w.window_len_s, &peaks) else {
            continue;
        };
        let est = [w.rr_bpm, w.ie_ratio, w.tv_variability, w.apen];
        let reference = [tb.rr_bpm, tb.ie_ratio, tb.tv_variability, tb.apen];
        for (k, (e, r)) in est.iter().zip(&reference).enumerate() {
            if let (Some(e), Some(r)) = (e, r) {
                pairs[k].0.push(*e);
                pairs[k].1.push(*r);
            }
        }
    }
    let pccs: Vec<f64> = waveforms
        .iter()
        .filter_map(|w| {
            let r = align_for_pcc(w, truth).ok()?.pcc;
            Some(match w.sign_convention {
                SignConvention::Oriented => r,
                SignConvention::Ambiguous => r.abs(),
            })
        })
        .collect();
    let [rr, ie, tvv, ap] = &pairs;
    Ok(Evaluation {
        n_windows: report.windows.len(),
        n_degraded: report.windows.iter().filter(|w| w.degraded).count(),
        rr_mae_bpm: mae(&rr.0, &rr.1).ok(),
        waveform_pcc: (!pccs.is_empty()).then(|| dsp::mean(&pccs)),
        ie_mse: mse(&ie.0, &ie.1).ok(),
        tvv_mse: mse(&tvv.0, &tvv.1).ok(),
        apen_mse: mse(&ap.0, &ap.1).ok(),
        bland_altman: BiomarkerAgreement {
            rr_bpm: bland_altman(&rr.0, &rr.1).ok(),
            ie_ratio: bland_altman(&ie.0, &ie.1).ok(),
            tv_variability: bland_altman(&tvv.0, &tvv.1).ok(),
            apen: bland_altman(&ap.0, &ap.1).ok(),
        },
    })
}
