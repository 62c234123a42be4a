//! Data types shared by the simulator, the recovery pipeline and the evaluator.
//!
//! Everything here is immutable after construction; constructors validate the
//! invariants so downstream stages can rely on them.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseDecision;

/// Smallest subcarrier count a trace may carry.
pub const MIN_SUBCARRIERS: usize = 8;
/// Shortest trace, in seconds, that still resolves the respiration band.
pub const MIN_DURATION_S: f64 = 10.0;
/// Allowed deviation of a sample interval from `1 / sample_rate_hz`.
pub const TIME_JITTER_S: f64 = 1e-6;

/// Per-subcarrier CSI amplitude over time, `amplitudes[[t, k]]` = |h(f_k, t)|.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTrace {
    sample_rate_hz: f64,
    center_freq_hz: f64,
    bandwidth_hz: f64,
    subcarrier_freqs_hz: Vec<f64>,
    timestamps_s: Vec<f64>,
    amplitudes: Array2<f64>,
}

impl CsiTrace {
    pub fn new(
        sample_rate_hz: f64,
        center_freq_hz: f64,
        bandwidth_hz: f64,
        subcarrier_freqs_hz: Vec<f64>,
        timestamps_s: Vec<f64>,
        amplitudes: Array2<f64>,
    ) -> Result<Self> {
        for (name, v) in
            [("sample_rate_hz", sample_rate_hz), ("center_freq_hz", center_freq_hz), ("bandwidth_hz", bandwidth_hz)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::MalformedHeader(format!("{name} must be positive, got {v}")));
            }
        }
        let k = subcarrier_freqs_hz.len();
        if k < MIN_SUBCARRIERS {
            return Err(Error::DimensionMismatch(format!("need at least {MIN_SUBCARRIERS} subcarriers, got {k}")));
        }
        if let Some(i) = subcarrier_freqs_hz.iter().position(|f| !f.is_finite()) {
            return Err(Error::FreqOrder { index: i });
        }
        if let Some(i) = (1..k).find(|&i| subcarrier_freqs_hz[i] <= subcarrier_freqs_hz[i - 1]) {
            return Err(Error::FreqOrder { index: i });
        }
        let l = timestamps_s.len();
        if amplitudes.dim() != (l, k) {
            return Err(Error::DimensionMismatch(format!(
                "amplitude matrix is {:?}, expected ({l}, {k})",
                amplitudes.dim()
            )));
        }
        if (l as f64) < sample_rate_hz * MIN_DURATION_S - 1e-9 {
            return Err(Error::DimensionMismatch(format!(
                "{l} samples at {sample_rate_hz} Hz is shorter than {MIN_DURATION_S} s"
            )));
        }
        check_uniform_time(&timestamps_s, sample_rate_hz)?;
        if let Some(((t, kk), v)) = amplitudes.indexed_iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidValue(format!("amplitude at row {t}, subcarrier {kk} is {v}")));
        }
        Ok(Self { sample_rate_hz, center_freq_hz, bandwidth_hz, subcarrier_freqs_hz, timestamps_s, amplitudes })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn subcarrier_freqs_hz(&self) -> &[f64] {
        &self.subcarrier_freqs_hz
    }

    pub fn timestamps_s(&self) -> &[f64] {
        &self.timestamps_s
    }

    /// L×K matrix, one row per sample.
    pub fn amplitudes(&self) -> &Array2<f64> {
        &self.amplitudes
    }

    pub fn n_subcarriers(&self) -> usize {
        self.subcarrier_freqs_hz.len()
    }

    pub fn n_samples(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Time series of one subcarrier.
    pub fn subcarrier(&self, k: usize) -> Vec<f64> {
        self.amplitudes.column(k).to_vec()
    }

    /// Copy of `len` consecutive samples starting at sample `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<CsiTrace> {
        if start + len > self.n_samples() {
            return Err(Error::DimensionMismatch(format!(
                "window [{start}, {}) exceeds {} samples",
                start + len,
                self.n_samples()
            )));
        }
        CsiTrace::new(
            self.sample_rate_hz,
            self.center_freq_hz,
            self.bandwidth_hz,
            self.subcarrier_freqs_hz.clone(),
            self.timestamps_s[start..start + len].to_vec(),
            self.amplitudes.slice(s![start..start + len, ..]).to_owned(),
        )
    }
}

fn check_uniform_time(ts: &[f64], fs: f64) -> Result<()> {
    let dt = 1.0 / fs;
    for (i, w) in ts.windows(2).enumerate() {
        let step = w[1] - w[0];
        if !(step > 0.0 && (step - dt).abs() <= TIME_JITTER_S) {
            return Err(Error::NonMonotonicTime { row: i + 1 });
        }
    }
    if let Some(i) = ts.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonMonotonicTime { row: i });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreathPhase {
    InhaleStart,
    ExhaleStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathMark {
    pub time_s: f64,
    pub phase: BreathPhase,
}

/// Reference chest displacement; rising values are inhalation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrace {
    timestamps_s: Vec<f64>,
    displacement: Vec<f64>,
    breath_marks: Vec<BreathMark>,
}

impl GroundTruthTrace {
    pub fn new(timestamps_s: Vec<f64>, displacement: Vec<f64>, breath_marks: Vec<BreathMark>) -> Result<Self> {
        if timestamps_s.len() != displacement.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} timestamps but {} displacement samples",
                timestamps_s.len(),
                displacement.len()
            )));
        }
        if timestamps_s.is_empty() {
            return Err(Error::DimensionMismatch("empty ground truth".into()));
        }
        if let Some(i) = (1..timestamps_s.len()).find(|&i| !(timestamps_s[i] > timestamps_s[i - 1])) {
            return Err(Error::NonMonotonicTime { row: i });
        }
        if let Some(i) = displacement.iter().position(|d| !d.is_finite()) {
            return Err(Error::InvalidValue(format!("displacement at row {i} is not finite")));
        }
        Ok(Self { timestamps_s, displacement, breath_marks })
    }

    pub fn timestamps_s(&self) -> &[f64] {
        &self.timestamps_s
    }

    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    pub fn breath_marks(&self) -> &[BreathMark] {
        &self.breath_marks
    }

    /// Samples whose timestamps fall in `[start_s, start_s + len_s)`.
    pub fn span(&self, start_s: f64, len_s: f64) -> (Vec<f64>, Vec<f64>) {
        let end = start_s + len_s;
        self.timestamps_s
            .iter()
            .zip(&self.displacement)
            .filter(|(t, _)| **t >= start_s - 1e-9 && **t < end - 1e-9)
            .map(|(t, d)| (*t, *d))
            .unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Rising segments are inhalation.
    Oriented,
    Ambiguous,
}

/// A respiratory waveform sampled uniformly from `start_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub start_s: f64,
    pub sign_convention: SignConvention,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, start_s: f64, sign_convention: SignConvention) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidValue(format!("sample rate {sample_rate_hz}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("waveform contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate_hz, start_s, sign_convention })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.start_s + i as f64 / self.sample_rate_hz
    }

    pub fn negated(&self) -> Waveform {
        Waveform { samples: self.samples.iter().map(|v| -v).collect(), ..self.clone() }
    }
}

/// Why a window produced no (or partial) output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    AllSubcarriersDegenerate,
    NoViableSubcarriers,
    EmptyPartition,
    SetTooSmall,
    AmbiguousTrend,
    NoBreathsFound,
    TooShort,
    Numerical,
}

/// Per-stage counts recorded for every window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub n_subcarriers: usize,
    pub n_nondegenerate: usize,
    pub n_above_floor: usize,
    pub bnr_threshold: Option<f64>,
    pub n_retained: usize,
    pub group1_size: usize,
    pub group2_size: usize,
    pub n_discarded: usize,
    pub partition_degenerate: bool,
    pub fused_bnr: Option<f64>,
}

/// Biomarkers for one analysis window plus provenance.
///
/// Quantities that could not be computed are `None`; `reason` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerReport {
    pub window_start_s: f64,
    pub window_len_s: f64,
    pub rr_bpm: Option<f64>,
    pub ie_ratio: Option<f64>,
    pub tv_variability: Option<f64>,
    pub apen: Option<f64>,
    pub n_breaths: usize,
    pub sign_convention: Option<SignConvention>,
    pub degraded: bool,
    pub reason: Option<ReasonCode>,
    pub phase: Option<PhaseDecision>,
    pub diagnostics: StageDiagnostics,
}

impl BiomarkerReport {
    pub fn empty(window_start_s: f64, window_len_s: f64) -> Self {
        Self {
            window_start_s,
            window_len_s,
            rr_bpm: None,
            ie_ratio: None,
            tv_variability: None,
            apen: None,
            n_breaths: 0,
            sign_convention: None,
            degraded: true,
            reason: None,
            phase: None,
            diagnostics: StageDiagnostics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidValue(format!("{what} = {v}")));
        if !(self.window_start_s.is_finite() && self.window_len_s > 0.0) {
            return bad("window", self.window_len_s);
        }
        if let Some(rr) = self.rr_bpm {
            if !(rr > 0.0 && rr <= 60.0) {
                return bad("rr_bpm", rr);
            }
        }
        if let Some(ie) = self.ie_ratio {
            if !(ie > 0.0 && ie.is_finite()) {
                return bad("ie_ratio", ie);
            }
        }
        if let Some(v) = self.tv_variability {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("tv_variability", v);
            }
        }
        if let Some(v) = self.apen {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("apen", v);
            }
        }
        Ok(())
    }
}

/// A full run: one report per analysis window, ordered by start time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub windows: Vec<BiomarkerReport>,
}
