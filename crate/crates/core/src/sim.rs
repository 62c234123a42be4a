//! Two-path (plus static clutter) CSI simulator and the geometric predicates
//! that decide which subcarriers can carry a monotonic breathing response.
//!
//! Chest path length follows `d(t) = d_rest - 2 * Δd * b(t)` with breath state
//! `b(t) ∈ [0, 1]` rising during inhalation, so inhalation shortens the
//! reflected path and exhalation lengthens it.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{BreathMark, BreathPhase, CsiTrace, GroundTruthTrace};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Phase difference between the chest-reflected and LoS paths at frequency `f`.
/// Not reduced modulo 2π.
pub fn path_phase(f_hz: f64, d_bre_m: f64, d_los_m: f64, vartheta_rad: f64) -> f64 {
    TAU * f_hz * (d_bre_m - d_los_m) / SPEED_OF_LIGHT + vartheta_rad
}

/// Two-path amplitude `sqrt(a² + b² + 2ab·cosθ)`.
pub fn csi_amplitude(a_los_mag: f64, a_bre_mag: f64, theta_rad: f64) -> f64 {
    let sq = a_los_mag * a_los_mag + a_bre_mag * a_bre_mag + 2.0 * a_los_mag * a_bre_mag * theta_rad.cos();
    sq.max(0.0).sqrt()
}

/// Upper bound `4π·Δd·f/c` on the phase swept by one breath.
pub fn max_breath_phase_span(delta_d_m: f64, f_hz: f64) -> f64 {
    2.0 * TAU * delta_d_m * f_hz / SPEED_OF_LIGHT
}

/// Smallest `d_bre - d_LoS` for which a band of width `bandwidth_hz` always
/// contains a monotonic subcarrier group: `0.255·c / B`.
pub fn min_path_delta_for_band(bandwidth_hz: f64) -> f64 {
    0.255 * SPEED_OF_LIGHT / bandwidth_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    /// θ interval inside [0, π): amplitude falls with θ, rises on inhalation.
    Case1,
    /// θ interval inside (π, 2π]: amplitude rises with θ, falls on inhalation.
    Case2,
    /// θ interval straddles a multiple of π: non-monotonic response.
    Case3,
}

/// Classify the θ interval `[theta_min, theta_max]` swept by a breath.
pub fn classify_case(theta_min_rad: f64, theta_max_rad: f64) -> Result<CaseLabel> {
    let span = theta_max_rad - theta_min_rad;
    if !(span >= 0.0) {
        return Err(Error::InvalidValue(format!("theta_max {theta_max_rad} below theta_min {theta_min_rad}")));
    }
    if span >= PI {
        return Err(Error::SpanTooWide { span });
    }
    let lo = theta_min_rad.rem_euclid(TAU);
    let hi = lo + span;
    Ok(if lo < PI {
        if hi <= PI {
            CaseLabel::Case1
        } else {
            CaseLabel::Case3
        }
    } else if hi <= TAU {
        CaseLabel::Case2
    } else {
        CaseLabel::Case3
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub attenuation: Complex64,
    pub length_m: f64,
}

impl PathSpec {
    pub fn new(magnitude: f64, phase_rad: f64, length_m: f64) -> Self {
        Self { attenuation: Complex64::from_polar(magnitude, phase_rad), length_m }
    }

    /// `α·exp(-j2π d f / c)`.
    pub fn phasor(&self, f_hz: f64) -> Complex64 {
        self.attenuation * Complex64::from_polar(1.0, -TAU * self.length_m * f_hz / SPEED_OF_LIGHT)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreathShape {
    Sinusoid,
    #[default]
    AsymmetricRaisedCosine,
}

fn default_modulation() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreathProfile {
    pub rate_bpm: f64,
    #[serde(default = "one")]
    pub ie_ratio: f64,
    /// Per-breath peak scale factors in (0, 1], cycled.
    #[serde(default = "default_modulation")]
    pub amplitude_modulation: Vec<f64>,
    #[serde(default)]
    pub shape: BreathShape,
    /// Fraction of a cycle already elapsed at t = 0.
    #[serde(default)]
    pub start_phase: f64,
}

fn one() -> f64 {
    1.0
}

impl BreathProfile {
    pub fn new(rate_bpm: f64, ie_ratio: f64) -> Self {
        Self {
            rate_bpm,
            ie_ratio,
            amplitude_modulation: default_modulation(),
            shape: BreathShape::default(),
            start_phase: 0.0,
        }
    }

    pub fn period_s(&self) -> f64 {
        60.0 / self.rate_bpm
    }

    /// (inhale, exhale) durations in seconds.
    pub fn durations_s(&self) -> (f64, f64) {
        let t = self.period_s();
        match self.shape {
            BreathShape::Sinusoid => (t / 2.0, t / 2.0),
            BreathShape::AsymmetricRaisedCosine => {
                (t * self.ie_ratio / (1.0 + self.ie_ratio), t / (1.0 + self.ie_ratio))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(9.6..=30.0).contains(&self.rate_bpm) {
            return Err(Error::InvalidScene(format!("rate {} bpm outside [9.6, 30]", self.rate_bpm)));
        }
        if !(0.3..=3.0).contains(&self.ie_ratio) {
            return Err(Error::InvalidScene(format!("ie_ratio {} outside [0.3, 3]", self.ie_ratio)));
        }
        if self.amplitude_modulation.is_empty() || self.amplitude_modulation.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidScene("amplitude_modulation must be non-empty with values in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.start_phase) {
            return Err(Error::InvalidScene("start_phase must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Breath state b(t) ∈ [0, 1]; troughs at cycle starts.
    pub fn state(&self, t_s: f64) -> f64 {
        let period = self.period_s();
        let shifted = t_s + self.start_phase * period;
        let cycle = (shifted / period).floor();
        let tau = shifted - cycle * period;
        let n = self.amplitude_modulation.len() as i64;
        let scale = self.amplitude_modulation[(cycle as i64).rem_euclid(n) as usize];
        let (ti, te) = self.durations_s();
        let s = if tau < ti { 0.5 * (1.0 - (PI * tau / ti).cos()) } else { 0.5 * (1.0 + (PI * (tau - ti) / te).cos()) };
        scale * s
    }

    fn marks(&self, duration_s: f64) -> Vec<BreathMark> {
        let period = self.period_s();
        let (ti, _) = self.durations_s();
        let first = -self.start_phase * period;
        let mut out = Vec::new();
        let mut c = first;
        while c < duration_s {
            if c >= 0.0 {
                out.push(BreathMark { time_s: c, phase: BreathPhase::InhaleStart });
            }
            if c + ti >= 0.0 && c + ti < duration_s {
                out.push(BreathMark { time_s: c + ti, phase: BreathPhase::ExhaleStart });
            }
            c += period;
        }
        out
    }
}

fn default_center() -> f64 {
    6.025e9
}

fn default_bandwidth() -> f64 {
    160e6
}

/// Everything the simulator needs to synthesize a trace.
///
/// `vartheta_rad` is an extra phase applied to the chest path, so the
/// effective offset is `arg(α_LoS·conj(α_bre)) + vartheta_rad`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub los: PathSpec,
    pub chest_rest: PathSpec,
    #[serde(default)]
    pub extra_static_paths: Vec<PathSpec>,
    #[serde(default)]
    pub vartheta_rad: f64,
    pub chest_delta_m: f64,
    pub breath: BreathProfile,
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default = "default_center")]
    pub center_freq_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
}

impl Default for SceneSpec {
    /// LoS 4 m, chest path 1.6 m longer, 5 mm chest excursion, 15 bpm.
    fn default() -> Self {
        Self {
            los: PathSpec::new(1.0, 0.0, 4.0),
            chest_rest: PathSpec::new(0.3, 0.0, 5.6),
            extra_static_paths: Vec::new(),
            vartheta_rad: 0.0,
            chest_delta_m: 0.005,
            breath: BreathProfile::new(15.0, 1.0),
            noise_snr_db: Some(20.0),
            center_freq_hz: default_center(),
            bandwidth_hz: default_bandwidth(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if !(self.los.attenuation.norm() > 0.0) {
            return bad("LoS attenuation must be nonzero".into());
        }
        if !self.chest_rest.attenuation.norm().is_finite() {
            return bad("chest attenuation must be finite".into());
        }
        for (i, p) in self.extra_static_paths.iter().enumerate() {
            if !(p.attenuation.norm() > 0.0 && p.attenuation.norm().is_finite()) {
                return bad(format!("static path {i} attenuation must be nonzero"));
            }
        }
        for (name, l) in std::iter::once(("los", self.los.length_m))
            .chain(std::iter::once(("chest_rest", self.chest_rest.length_m)))
            .chain(self.extra_static_paths.iter().map(|p| ("static", p.length_m)))
        {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("{name} path length must be positive, got {l}"));
            }
        }
        if !(0.0..=0.02).contains(&self.chest_delta_m) {
            return bad(format!("chest_delta_m {} outside [0, 0.02]", self.chest_delta_m));
        }
        if self.chest_rest.length_m - 2.0 * self.chest_delta_m <= 0.0 {
            return bad("chest path would become non-positive".into());
        }
        if !self.vartheta_rad.is_finite() {
            return bad("vartheta_rad must be finite".into());
        }
        if !(self.center_freq_hz > 0.0 && self.bandwidth_hz > 0.0) || self.bandwidth_hz >= 2.0 * self.center_freq_hz {
            return bad("center frequency and bandwidth must be positive".into());
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return bad("noise_snr_db must be finite".into());
            }
        }
        self.breath.validate()
    }

    /// Uniform grid of `n` subcarriers spaced `bandwidth / n`, centred on the
    /// carrier.
    pub fn subcarrier_freqs(&self, n: usize) -> Vec<f64> {
        let spacing = self.bandwidth_hz / n as f64;
        let mid = (n as f64 - 1.0) / 2.0;
        (0..n).map(|k| self.center_freq_hz + (k as f64 - mid) * spacing).collect()
    }

    /// Sum of all static path phasors at `f`.
    pub fn static_phasor(&self, f_hz: f64) -> Complex64 {
        self.extra_static_paths.iter().fold(self.los.phasor(f_hz), |acc, p| acc + p.phasor(f_hz))
    }

    /// Chest-path phasor for path length `d_m`.
    pub fn chest_phasor(&self, f_hz: f64, d_m: f64) -> Complex64 {
        self.chest_rest.attenuation * Complex64::from_polar(1.0, -self.vartheta_rad - TAU * d_m * f_hz / SPEED_OF_LIGHT)
    }

    /// Chest path length at breath state `b`.
    pub fn chest_length(&self, b: f64) -> f64 {
        self.chest_rest.length_m - 2.0 * self.chest_delta_m * b
    }

    /// The θ interval swept by one full breath at `f`, using the composite
    /// static phasor in place of the LoS path. Reduces to `path_phase` when
    /// there is no clutter.
    pub fn theta_interval(&self, f_hz: f64) -> (f64, f64) {
        let offset = self.static_phasor(f_hz).arg() + TAU * self.los.length_m * f_hz / SPEED_OF_LIGHT
            - self.chest_rest.attenuation.arg()
            + self.vartheta_rad;
        let at = |d: f64| path_phase(f_hz, d, self.los.length_m, offset);
        (at(self.chest_length(1.0)), at(self.chest_length(0.0)))
    }

    /// Path difference `d_bre - d_LoS` at rest.
    pub fn path_delta_m(&self) -> f64 {
        self.chest_rest.length_m - self.los.length_m
    }
}

pub fn case_of_subcarrier(scene: &SceneSpec, f_hz: f64) -> Result<CaseLabel> {
    let (lo, hi) = scene.theta_interval(f_hz);
    classify_case(lo, hi)
}

/// Synthesize a trace and its ground truth.
///
/// Noise, when enabled, is complex Gaussian added to `h` before taking the
/// magnitude. Its per-component variance is the mean over subcarriers of the
/// temporal variance of the noiseless amplitude (the respiration swing)
/// divided by the SNR; with no swing, the mean static power is the reference.
pub fn simulate_trace(
    scene: &SceneSpec,
    duration_s: f64,
    sample_rate_hz: f64,
    n_subcarriers: usize,
    seed: u64,
) -> Result<(CsiTrace, GroundTruthTrace)> {
    scene.validate()?;
    if n_subcarriers < crate::trace::MIN_SUBCARRIERS {
        return Err(Error::InvalidScene(format!("need at least {} subcarriers", crate::trace::MIN_SUBCARRIERS)));
    }
    if !(sample_rate_hz > 0.0 && duration_s > 0.0) {
        return Err(Error::InvalidScene("duration and sample rate must be positive".into()));
    }
    let l = (duration_s * sample_rate_hz).round() as usize;
    let times: Vec<f64> = (0..l).map(|i| i as f64 / sample_rate_hz).collect();
    let states: Vec<f64> = times.iter().map(|t| scene.breath.state(*t)).collect();
    let lengths: Vec<f64> = states.iter().map(|b| scene.chest_length(*b)).collect();
    let freqs = scene.subcarrier_freqs(n_subcarriers);

    // Noiseless complex channel, one column per subcarrier.
    let columns: Vec<Vec<Complex64>> = freqs
        .par_iter()
        .map(|&f| {
            let s = scene.static_phasor(f);
            lengths.iter().map(|&d| s + scene.chest_phasor(f, d)).collect()
        })
        .collect();

    let sigma = match scene.noise_snr_db {
        None => 0.0,
        Some(snr) => {
            let swing = columns
                .iter()
                .map(|c| {
                    let a: Vec<f64> = c.iter().map(|h| h.norm()).collect();
                    crate::dsp::variance(&a)
                })
                .sum::<f64>()
                / n_subcarriers as f64;
            let reference = if swing > 0.0 {
                swing
            } else {
                columns.iter().map(|c| c[0].norm_sqr()).sum::<f64>() / n_subcarriers as f64
            };
            (reference / 10f64.powf(snr / 10.0)).sqrt()
        }
    };

    let amps: Vec<Vec<f64>> = columns
        .into_par_iter()
        .enumerate()
        .map(|(k, col)| {
            if sigma == 0.0 {
                return col.iter().map(|h| h.norm()).collect();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            col.iter()
                .map(|h| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    (h + Complex64::new(sigma * re, sigma * im)).norm()
                })
                .collect()
        })
        .collect();

    let amplitudes = Array2::from_shape_fn((l, n_subcarriers), |(t, k)| amps[k][t]);
    let trace =
        CsiTrace::new(sample_rate_hz, scene.center_freq_hz, scene.bandwidth_hz, freqs, times.clone(), amplitudes)?;
    let truth = GroundTruthTrace::new(times, states, scene.breath.marks(duration_s))?;
    Ok((trace, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::power_spectrum;

    fn pcc(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    /// Scene whose subcarrier `f` sees the θ interval centred on `centre`.
    fn centred_scene(f: f64, centre: f64) -> SceneSpec {
        let mut scene = SceneSpec { noise_snr_db: None, ..SceneSpec::default() };
        let (lo, hi) = scene.theta_interval(f);
        scene.vartheta_rad += centre - 0.5 * (lo + hi);
        scene
    }

    #[test]
    fn path_phase_values() {
        assert_eq!(path_phase(6e9, 3.0, 3.0, 0.0), 0.0);
        let step = path_phase(6e9 + 312_500.0, 5.0, 4.0, 0.0) - path_phase(6e9, 5.0, 4.0, 0.0);
        assert!((step - 0.00654).abs() < 1e-5, "{step}");
        // Complex-exponential oracle: arg(α_L e^{-jφL} · conj(α_b e^{-jφb})).
        let (f, dl, db) = (6.025e9, 4.0, 5.6056);
        let h_los = Complex64::from_polar(1.0, -TAU * dl * f / SPEED_OF_LIGHT);
        let h_bre = Complex64::from_polar(1.0, -TAU * db * f / SPEED_OF_LIGHT);
        let oracle = (h_los * h_bre.conj()).arg();
        let got = path_phase(f, db, dl, 0.0);
        let diff = (got - oracle).rem_euclid(TAU);
        assert!(diff.min(TAU - diff) < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn amplitude_values() {
        assert_eq!(csi_amplitude(0.8, 0.0, 1.3), 0.8);
        assert!((csi_amplitude(1.0, 0.3, PI) - 0.7).abs() < 1e-15);
        for i in 0..200 {
            let a = 0.1 + (i as f64 * 0.37).sin().abs();
            let b = (i as f64 * 0.91).cos().abs();
            let (p1, p2) = (i as f64 * 0.13, i as f64 * 1.7 - 3.0);
            let direct = (Complex64::from_polar(a, -p1) + Complex64::from_polar(b, -p2)).norm();
            let got = csi_amplitude(a, b, p2 - p1);
            assert!((got - direct).abs() < 1e-12);
            assert!(got >= (a - b).abs() - 1e-12 && got <= a + b + 1e-12);
        }
    }

    #[test]
    fn span_bound_values() {
        assert!((max_breath_phase_span(0.0054, 7.1e9) / PI - 0.51).abs() < 0.005);
        assert_eq!(max_breath_phase_span(0.0, 7.1e9), 0.0);
        assert!((max_breath_phase_span(0.005, 2.4e9) / PI - 0.16).abs() < 0.001);
    }

    #[test]
    fn case_classification() {
        assert_eq!(classify_case(0.3 * PI, 0.7 * PI).unwrap(), CaseLabel::Case1);
        assert_eq!(classify_case(1.2 * PI, 1.6 * PI).unwrap(), CaseLabel::Case2);
        assert_eq!(classify_case(0.9 * PI, 1.1 * PI).unwrap(), CaseLabel::Case3);
        assert_eq!(classify_case(1.9 * PI, 2.1 * PI).unwrap(), CaseLabel::Case3);
        assert_eq!(classify_case(4.3 * PI, 4.7 * PI).unwrap(), CaseLabel::Case1);
        assert!(matches!(classify_case(0.0, PI), Err(Error::SpanTooWide { .. })));
    }

    #[test]
    fn bandwidth_law() {
        assert!((min_path_delta_for_band(160e6) - 0.478).abs() < 5e-4);
        assert!((min_path_delta_for_band(10e9) - 7.65e-3).abs() < 1e-5);
        assert!((min_path_delta_for_band(80e6) - 2.0 * min_path_delta_for_band(160e6)).abs() < 1e-12);
    }

    #[test]
    fn silent_chest_gives_static_channel() {
        let scene = SceneSpec { chest_rest: PathSpec::new(0.0, 0.0, 5.6), noise_snr_db: None, ..SceneSpec::default() };
        let (trace, _) = simulate_trace(&scene, 12.0, 100.0, 16, 1).unwrap();
        for k in 0..16 {
            let col = trace.subcarrier(k);
            assert!(col.iter().all(|v| *v == col[0]));
        }
    }

    #[test]
    fn straddling_subcarrier_doubles_frequency() {
        let scene0 = SceneSpec {
            breath: BreathProfile { shape: BreathShape::Sinusoid, ..BreathProfile::new(15.0, 1.0) },
            ..SceneSpec::default()
        };
        let f = scene0.center_freq_hz;
        let scene = SceneSpec { vartheta_rad: centred_scene(f, PI).vartheta_rad, noise_snr_db: None, ..scene0 };
        assert_eq!(case_of_subcarrier(&scene, f).unwrap(), CaseLabel::Case3);
        let freqs = scene.subcarrier_freqs(64);
        let k = freqs.iter().enumerate().min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs())).unwrap().0;
        let (trace, _) = simulate_trace(&scene, 60.0, 100.0, 64, 3).unwrap();
        let col = trace.subcarrier(k);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let centred: Vec<f64> = col.iter().map(|v| v - m).collect();
        let s = power_spectrum(&centred, 100.0).unwrap();
        assert!((s.peak_freq_hz() - 0.5).abs() < 0.02, "{}", s.peak_freq_hz());
    }

    #[test]
    fn case1_amplitude_tracks_inhalation() {
        let base = SceneSpec::default();
        let scene = centred_scene(base.center_freq_hz, 0.5 * PI);
        let freqs = scene.subcarrier_freqs(32);
        let (trace, truth) = simulate_trace(&scene, 30.0, 100.0, 32, 0).unwrap();
        for (k, f) in freqs.iter().enumerate() {
            let case = case_of_subcarrier(&scene, *f).unwrap();
            let r = pcc(&trace.subcarrier(k), truth.displacement());
            match case {
                CaseLabel::Case1 => assert!(r > 0.0, "k={k} r={r}"),
                CaseLabel::Case2 => assert!(r < 0.0, "k={k} r={r}"),
                CaseLabel::Case3 => {}
            }
        }
        // Well inside the interval the response is nearly linear.
        let mid = 16;
        assert_eq!(case_of_subcarrier(&scene, freqs[mid]).unwrap(), CaseLabel::Case1);
        assert!(pcc(&trace.subcarrier(mid), truth.displacement()) >= 0.99);
    }

    #[test]
    fn case_labels_driven_by_geometry() {
        let f = 6.025e9;
        for (centre, want) in [(0.5 * PI, CaseLabel::Case1), (1.4 * PI, CaseLabel::Case2), (PI, CaseLabel::Case3)] {
            let scene = centred_scene(f, centre);
            let (lo, hi) = scene.theta_interval(f);
            let direct_hi = path_phase(f, scene.chest_rest.length_m, scene.los.length_m, scene.vartheta_rad);
            let d = (hi - direct_hi).rem_euclid(TAU);
            assert!(d.min(TAU - d) < 1e-9);
            assert!(hi - lo <= max_breath_phase_span(scene.chest_delta_m, f) + 1e-12);
            assert_eq!(case_of_subcarrier(&scene, f).unwrap(), want);
        }
    }

    #[test]
    fn still_chest_is_never_case3() {
        for i in 0..40 {
            let scene = SceneSpec { chest_delta_m: 0.0, vartheta_rad: i as f64 * 0.157, ..SceneSpec::default() };
            let c = case_of_subcarrier(&scene, 6.0e9 + i as f64 * 1e6).unwrap();
            assert_ne!(c, CaseLabel::Case3);
        }
    }

    #[test]
    fn case_runs_are_contiguous_across_band() {
        let scene = SceneSpec { chest_rest: PathSpec::new(0.3, 0.0, 5.6), ..SceneSpec::default() };
        let freqs = scene.subcarrier_freqs(2000);
        let labels: Vec<CaseLabel> = freqs.iter().map(|f| case_of_subcarrier(&scene, *f).unwrap()).collect();
        let mut runs = vec![labels[0]];
        for l in &labels[1..] {
            if l != runs.last().unwrap() {
                runs.push(*l);
            }
        }
        // θ grows by 2π·160 MHz·1.6 m / c ≈ 1.7π across the band, so every
        // case shows up and each change steps through Case3 between 1 and 2.
        assert!(runs.contains(&CaseLabel::Case1) && runs.contains(&CaseLabel::Case2));
        for w in runs.windows(2) {
            assert!(w.contains(&CaseLabel::Case3), "{runs:?}");
        }
    }

    #[test]
    fn simulation_is_deterministic_and_bounded() {
        let mut scene = SceneSpec::default();
        scene.extra_static_paths.push(PathSpec::new(0.1, 1.0, 7.3));
        let (a, ta) = simulate_trace(&scene, 12.0, 100.0, 16, 42).unwrap();
        let (b, tb) = simulate_trace(&scene, 12.0, 100.0, 16, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = simulate_trace(&scene, 12.0, 100.0, 16, 43).unwrap();
        assert_ne!(a, c);

        let quiet = SceneSpec { noise_snr_db: None, ..scene.clone() };
        let (q, truth) = simulate_trace(&quiet, 12.0, 100.0, 16, 0).unwrap();
        let sum_all = 1.0 + 0.3 + 0.1;
        let floor = (1.0f64 - 0.3 - 0.1).abs();
        assert!(q.amplitudes().iter().all(|v| *v >= floor - 1e-12 && *v <= sum_all + 1e-12));
        for b in truth.displacement() {
            let d = quiet.chest_length(*b);
            assert!(quiet.chest_rest.length_m - d <= 2.0 * quiet.chest_delta_m + 1e-15);
            assert!((0.0..=1.0).contains(b));
        }
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        let s = SceneSpec { chest_delta_m: 0.03, ..SceneSpec::default() };
        assert!(matches!(simulate_trace(&s, 12.0, 100.0, 16, 0), Err(Error::InvalidScene(_))));
        let mut s = SceneSpec::default();
        s.breath.rate_bpm = 40.0;
        assert!(matches!(simulate_trace(&s, 12.0, 100.0, 16, 0), Err(Error::InvalidScene(_))));
        let s = SceneSpec::default();
        assert!(matches!(simulate_trace(&s, 12.0, 100.0, 4, 0), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn breath_profile_shape() {
        let p = BreathProfile::new(15.0, 0.6);
        let (ti, te) = p.durations_s();
        assert!((ti - 1.5).abs() < 1e-12 && (te - 2.5).abs() < 1e-12);
        assert_eq!(p.state(0.0), 0.0);
        assert!((p.state(1.5) - 1.0).abs() < 1e-12);
        assert!(p.state(4.0).abs() < 1e-12);
        let marks = p.marks(8.0);
        assert_eq!(marks.len(), 4);
        assert_eq!(marks[1].phase, BreathPhase::ExhaleStart);
    }

    #[test]
    fn scene_json_uses_defaults() {
        let s: SceneSpec = serde_json::from_str(
            r#"{"los":{"attenuation":[1.0,0.0],"length_m":4.0},
                "chest_rest":{"attenuation":[0.3,0.0],"length_m":5.6},
                "chest_delta_m":0.005,"breath":{"rate_bpm":15.0}}"#,
        )
        .unwrap();
        s.validate().unwrap();
        assert_eq!(s.center_freq_hz, 6.025e9);
        assert_eq!(s.noise_snr_db, None);
    }
}
