//! Window-level orchestration: preprocess, select, group and fuse, orient,
//! then measure. Stage failures become reason codes on the report so a bad
//! window never stops a stream.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biomarkers::{self, PeakParams};
use crate::dsp::{self, Taper};
use crate::error::{Error, Result};
use crate::grouping::{self, Partition};
use crate::phase;
use crate::preprocess::{self, PreprocessParams, WaveformMatrix};
use crate::select::{self, BnrTable, SelectParams};
use crate::sim::{simulate_trace, SceneSpec};
use crate::trace::{BiomarkerReport, CsiTrace, ReasonCode, SignConvention, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    pub lowess_span: f64,
    pub bnr_band: [f64; 2],
    pub bnr_floor: f64,
    pub bnr_percentile: f64,
    /// Window applied before the band-power periodogram.
    pub bnr_taper: Taper,
    pub sim_threshold: f64,
    pub keep_fraction: f64,
    pub gaussian_sigma: f64,
    /// Share of non-degenerate subcarriers that must clear the BNR floor for
    /// a window to count as good quality.
    pub min_above_floor_frac: f64,
    pub min_peak_dist_s: f64,
    pub prominence_frac: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: 30.0,
            hop_s: 1.0,
            sg_window: 11,
            sg_order: 3,
            lowess_span: 0.05,
            bnr_band: [select::RESPIRATION_BAND_HZ.0, select::RESPIRATION_BAND_HZ.1],
            bnr_floor: 2.0,
            bnr_percentile: 80.0,
            bnr_taper: Taper::Hann,
            sim_threshold: 0.5,
            keep_fraction: 0.5,
            gaussian_sigma: 2.0,
            min_above_floor_frac: 0.5,
            min_peak_dist_s: 2.0,
            prominence_frac: 0.10,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(15.0..=60.0).contains(&self.window_s) {
            return bad(format!("window_s {} outside [15, 60]", self.window_s));
        }
        if !(self.hop_s > 0.0 && self.hop_s <= self.window_s) {
            return bad(format!("hop_s {} must be in (0, window_s]", self.hop_s));
        }
        if self.sg_window.is_multiple_of(2) || self.sg_window <= self.sg_order {
            return bad(format!("sg_window {} must be odd and exceed sg_order {}", self.sg_window, self.sg_order));
        }
        if !(self.lowess_span > 0.0 && self.lowess_span <= 1.0) {
            return bad(format!("lowess_span {} outside (0, 1]", self.lowess_span));
        }
        let [lo, hi] = self.bnr_band;
        if !(lo > 0.0 && hi > lo) {
            return bad(format!("bnr_band [{lo}, {hi}] is not a positive interval"));
        }
        if !(0.0..=100.0).contains(&self.bnr_percentile) {
            return bad(format!("bnr_percentile {}", self.bnr_percentile));
        }
        if self.bnr_floor.is_nan() {
            return bad("bnr_floor is NaN".into());
        }
        if !(self.sim_threshold > 0.0 && self.sim_threshold <= 1.0) {
            return bad(format!("sim_threshold {} outside (0, 1]", self.sim_threshold));
        }
        if !(0.0..=1.0).contains(&self.keep_fraction) {
            return bad(format!("keep_fraction {} outside [0, 1]", self.keep_fraction));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return bad(format!("gaussian_sigma {}", self.gaussian_sigma));
        }
        if !(0.0..=1.0).contains(&self.min_above_floor_frac) {
            return bad(format!("min_above_floor_frac {} outside [0, 1]", self.min_above_floor_frac));
        }
        if !(self.min_peak_dist_s > 0.0 && (0.0..1.0).contains(&self.prominence_frac)) {
            return bad("peak detection parameters out of range".into());
        }
        Ok(())
    }

    fn preprocess(&self) -> PreprocessParams {
        PreprocessParams { sg_window: self.sg_window, sg_order: self.sg_order, lowess_span: self.lowess_span }
    }

    fn band(&self) -> (f64, f64) {
        (self.bnr_band[0], self.bnr_band[1])
    }

    /// Peak-detection parameters for a window of `n_samples` at `fs`.
    pub fn peak_params(&self, n_samples: usize, fs: f64) -> PeakParams {
        // Half the LOWESS support, the stretch where its fit is one-sided.
        let lowess_s = (self.lowess_span * n_samples as f64).ceil() / fs;
        PeakParams {
            min_dist_s: self.min_peak_dist_s,
            prominence_frac: self.prominence_frac,
            edge_guard_s: 0.5 * lowess_s,
        }
    }
}

/// Wall-clock time spent in each stage of one window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_ms: f64,
    pub select_ms: f64,
    pub group_ms: f64,
    pub phase_ms: f64,
    pub biomarkers_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.preprocess_ms + self.select_ms + self.group_ms + self.phase_ms + self.biomarkers_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub waveform: Option<Waveform>,
    /// Same fusion and orientation over the Savitzky-Golay rows, without
    /// LOWESS; breath timing and depth are read off it.
    pub detail: Option<Waveform>,
    pub report: BiomarkerReport,
    /// BNR per original subcarrier (0 for subcarriers dropped as constant).
    pub bnr: Option<BnrTable>,
    /// Partition over original subcarrier indices.
    pub partition: Option<Partition>,
    pub timings: StageTimings,
}

fn reason_for(e: &Error) -> ReasonCode {
    match e {
        Error::AllSubcarriersDegenerate => ReasonCode::AllSubcarriersDegenerate,
        Error::NoViableSubcarriers { .. } | Error::TooFew { .. } => ReasonCode::NoViableSubcarriers,
        Error::EmptyPartition => ReasonCode::EmptyPartition,
        Error::SetTooSmall { .. } => ReasonCode::SetTooSmall,
        Error::AmbiguousTrend => ReasonCode::AmbiguousTrend,
        Error::NoBreathsFound => ReasonCode::NoBreathsFound,
        Error::TooShort { .. } => ReasonCode::TooShort,
        _ => ReasonCode::Numerical,
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Process one window. Only structural problems (configuration, a window
/// too short for the filters) are errors; everything else lands on the report.
pub fn run_window(trace: &CsiTrace, window_start_s: f64, cfg: &PipelineConfig) -> Result<WindowOutput> {
    cfg.validate()?;
    let len_s = trace.n_samples() as f64 / trace.sample_rate_hz();
    let mut report = BiomarkerReport::empty(window_start_s, len_s);
    report.diagnostics.n_subcarriers = trace.n_subcarriers();
    let mut out = WindowOutput {
        waveform: None,
        detail: None,
        report,
        bnr: None,
        partition: None,
        timings: StageTimings::default(),
    };
    let fail = |mut out: WindowOutput, e: Error| -> Result<WindowOutput> {
        out.report.reason = Some(reason_for(&e));
        out.report.degraded = true;
        Ok(out)
    };

    let t = Instant::now();
    let wm = match preprocess::extract_preliminary(trace, &cfg.preprocess()) {
        Ok(wm) => wm,
        Err(e @ (Error::BadWindow { .. } | Error::SpanTooSmall { .. })) => return Err(e),
        Err(e) => return fail(out, e),
    };
    out.timings.preprocess_ms = ms(t.elapsed());
    out.report.diagnostics.n_nondegenerate = wm.n_rows();

    let t = Instant::now();
    let bnrs = select::bnr_rows(&wm, cfg.band(), cfg.bnr_taper)?;
    out.report.diagnostics.n_above_floor = bnrs.iter().filter(|b| **b >= cfg.bnr_floor).count();
    let params = SelectParams { percentile: cfg.bnr_percentile, floor: cfg.bnr_floor };
    let table = select::select(&bnrs, &params);
    out.timings.select_ms = ms(t.elapsed());
    let table = match table {
        Ok(t) => t,
        Err(e) => return fail(out, e),
    };
    out.report.diagnostics.bnr_threshold = Some(table.threshold_used);
    out.report.diagnostics.n_retained = table.retained.len();
    let sub = wm.select_rows(&table.retained);
    // Report BNRs against original subcarrier indices.
    let mut full = vec![0.0; trace.n_subcarriers()];
    for (r, &k) in wm.subcarrier_index_map.iter().enumerate() {
        full[k] = table.bnr[r];
    }
    out.bnr =
        Some(BnrTable { bnr: full, threshold_used: table.threshold_used, retained: sub.subcarrier_index_map.clone() });

    let t = Instant::now();
    let fused = grouping::build_similarity(&sub, cfg.sim_threshold).and_then(|graph| {
        let cut = grouping::partition(&graph);
        let part = grouping::refine(&graph, &cut, cfg.keep_fraction);
        let w = grouping::align_and_fuse(&sub, &part)?;
        Ok((cut.degenerate, part, w))
    });
    out.timings.group_ms = ms(t.elapsed());
    let (degenerate, part, mut fused) = match fused {
        Ok(v) => v,
        Err(e) => return fail(out, e),
    };
    fused.start_s = window_start_s;
    let d = &mut out.report.diagnostics;
    d.partition_degenerate = degenerate;
    d.group1_size = part.group1.len();
    d.group2_size = part.group2.len();
    d.n_discarded = part.discarded.len();
    d.fused_bnr = select::bnr(&fused.samples, fused.sample_rate_hz, cfg.band()).ok();
    let map = &sub.subcarrier_index_map;
    out.partition = Some(Partition {
        group1: part.group1.iter().map(|&r| map[r]).collect(),
        group2: part.group2.iter().map(|&r| map[r]).collect(),
        scores: part.scores.clone(),
        discarded: part.discarded.iter().map(|&r| map[r]).collect(),
    });

    let t = Instant::now();
    let oriented = phase::longest_contiguous(&part, map).and_then(|(set, group)| {
        let rows: Vec<usize> =
            set.iter().map(|k| map.iter().position(|m| m == k).expect("run drawn from the index map")).collect();
        let amps = sub.smoothed.select(ndarray::Axis(0), &rows);
        let profile = phase::frequency_profile(&amps, cfg.gaussian_sigma)?;
        phase::identify_and_orient(&fused, &profile, &set, group)
    });
    out.timings.phase_ms = ms(t.elapsed());
    let w = match oriented {
        Ok((w, decision)) => {
            out.report.phase = Some(decision);
            w
        }
        Err(e) => {
            out.report.reason = Some(reason_for(&e));
            fused
        }
    };
    out.report.sign_convention = Some(w.sign_convention);

    let t = Instant::now();
    let peaks = cfg.peak_params(w.len(), w.sample_rate_hz);
    match biomarkers::detect_breaths(&w, &peaks) {
        Ok(seg) => {
            // LOWESS rounds each breath towards a sinusoid, so timing and
            // depth are read off the same fusion of the lightly smoothed rows.
            let flipped = out.report.phase.as_ref().is_some_and(|d| d.flipped);
            let fine = detail_waveform(&sub, &part, &w, flipped)
                .map(|d| (biomarkers::snap_to(&seg, &d, peaks.edge_guard_s), d));
            let r = &mut out.report;
            r.n_breaths = seg.breaths.len();
            r.rr_bpm = biomarkers::respiratory_rate(&seg).ok().filter(|v| *v > 0.0 && *v <= 60.0);
            if let Ok((fine_seg, d)) = fine {
                r.ie_ratio = biomarkers::ie_ratio(&d, &fine_seg).ok();
                r.tv_variability = biomarkers::tv_variability(&fine_seg).ok();
                out.detail = Some(d);
            }
        }
        Err(e) => {
            out.report.reason.get_or_insert(reason_for(&e));
        }
    }
    out.report.apen = biomarkers::apen(&w.samples, 2, 0.2).ok();
    out.timings.biomarkers_ms = ms(t.elapsed());

    let r = &out.report;
    out.report.degraded = r.reason.is_some()
        || r.rr_bpm.is_none()
        || r.sign_convention != Some(SignConvention::Oriented)
        || r.diagnostics.partition_degenerate
        || (r.diagnostics.n_above_floor as f64) < cfg.min_above_floor_frac * r.diagnostics.n_nondegenerate as f64;
    out.waveform = Some(w);
    Ok(out)
}

/// Fusion of the z-scored Savitzky-Golay rows with the same partition and
/// orientation as `w`.
fn detail_waveform(sub: &WaveformMatrix, part: &Partition, w: &Waveform, flipped: bool) -> Result<Waveform> {
    let mut g = sub.smoothed.clone();
    for mut row in g.rows_mut() {
        let z = dsp::zscore(row.as_slice().expect("standard layout"))?;
        row.assign(&ndarray::ArrayView1::from(&z));
    }
    let wm = WaveformMatrix { g, ..sub.clone() };
    let mut d = grouping::align_and_fuse(&wm, part)?;
    if flipped {
        d = d.negated();
    }
    d.start_s = w.start_s;
    d.sign_convention = w.sign_convention;
    Ok(d)
}

/// Window start sample indices for a trace of `len` samples.
pub fn window_starts(len: usize, window: usize, hop: usize) -> Vec<usize> {
    if window == 0 || hop == 0 || len < window {
        return Vec::new();
    }
    (0..=(len - window) / hop).map(|i| i * hop).collect()
}

/// Sliding-window run over a whole trace, in window order.
pub fn run_stream(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<Vec<WindowOutput>> {
    cfg.validate()?;
    let fs = trace.sample_rate_hz();
    let window = (cfg.window_s * fs).round() as usize;
    let hop = ((cfg.hop_s * fs).round() as usize).max(1);
    if trace.n_samples() < window {
        return Err(Error::TooShort { needed: window, got: trace.n_samples() });
    }
    let t0 = trace.timestamps_s()[0];
    window_starts(trace.n_samples(), window, hop)
        .into_par_iter()
        .map(|s| {
            let slice = trace.window(s, window)?;
            run_window(&slice, t0 + s as f64 / fs, cfg)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_subcarriers: usize,
    pub n_samples: usize,
    pub n_retained: usize,
    pub timings: StageTimings,
    pub total_ms: f64,
}

/// Time one full window on a simulated trace of `n_subcarriers` over
/// `window_s` seconds at 100 Hz. Each stage and the total report their best
/// of `repeats` runs independently.
pub fn bench(cfg: &PipelineConfig, n_subcarriers: usize, window_s: f64, repeats: usize) -> Result<BenchReport> {
    let scene = SceneSpec::default();
    let (trace, _) = simulate_trace(&scene, window_s, 100.0, n_subcarriers, cfg.seed)?;
    let cfg = PipelineConfig { window_s: window_s.clamp(15.0, 60.0), ..cfg.clone() };
    let mut best: Option<BenchReport> = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let out = run_window(&trace, 0.0, &cfg)?;
        let total = ms(t.elapsed());
        let b = best.get_or_insert_with(|| BenchReport {
            n_subcarriers,
            n_samples: trace.n_samples(),
            n_retained: out.report.diagnostics.n_retained,
            timings: out.timings,
            total_ms: total,
        });
        let (m, o) = (&mut b.timings, &out.timings);
        m.preprocess_ms = m.preprocess_ms.min(o.preprocess_ms);
        m.select_ms = m.select_ms.min(o.select_ms);
        m.group_ms = m.group_ms.min(o.group_ms);
        m.phase_ms = m.phase_ms.min(o.phase_ms);
        m.biomarkers_ms = m.biomarkers_ms.min(o.biomarkers_ms);
        b.total_ms = b.total_ms.min(total);
    }
    Ok(best.expect("at least one repeat"))
}
