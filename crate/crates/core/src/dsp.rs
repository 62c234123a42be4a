//! Numeric kernels shared by every pipeline stage.
//!
//! Savitzky-Golay and LOWESS are both linear smoothers on a uniform grid, so
//! each is planned once into per-position coefficient tables and then applied
//! as a plain weighted sum. This keeps a 2000-subcarrier window cheap.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Savitzky-Golay smoother with precomputed least-squares projection rows.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    order: usize,
    // Row r evaluates the fitted polynomial at window position r.
    projection: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) || order >= window {
            return Err(Error::BadWindow { window, order, len: 0 });
        }
        let half = (window / 2) as f64;
        let scale = if half > 0.0 { half } else { 1.0 };
        let design = DMatrix::from_fn(window, order + 1, |i, j| ((i as f64 - half) / scale).powi(j as i32));
        let gram = design.transpose() * &design;
        let inv = gram.try_inverse().ok_or(Error::BadWindow { window, order, len: 0 })?;
        let hat = &design * inv * design.transpose();
        let projection = (0..window).map(|r| (0..window).map(|c| hat[(r, c)]).collect()).collect();
        Ok(Self { window, order, projection })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (w, n) = (self.window, x.len());
        if n < w {
            return Err(Error::BadWindow { window: w, order: self.order, len: n });
        }
        let m = w / 2;
        let mut y = vec![0.0; n];
        let centre = &self.projection[m];
        for i in m..n - m {
            y[i] = dot(centre, &x[i - m..i + m + 1]);
        }
        for r in 0..m {
            y[r] = dot(&self.projection[r], &x[..w]);
            y[n - w + m + 1 + r] = dot(&self.projection[m + 1 + r], &x[n - w..]);
        }
        Ok(y)
    }
}

/// Least-squares polynomial smoothing; ends are evaluated from the fit of the
/// first and last full windows.
pub fn sg_filter(x: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    SavitzkyGolay::new(window, order).map_err(|_| Error::BadWindow { window, order, len: x.len() })?.apply(x)
}

/// Planned LOWESS (local linear, tricube weights, no robustness iterations)
/// for a fixed series length.
#[derive(Clone)]
pub struct Lowess {
    len: usize,
    width: usize,
    // Equivalent kernel indexed by the fit point's offset inside its window.
    kernels: Vec<Vec<f64>>,
    // Interior points share one kernel; wide ones are applied by FFT.
    interior: Option<FftCorrelator>,
}

impl std::fmt::Debug for Lowess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lowess").field("len", &self.len).field("width", &self.width).finish()
    }
}

/// Kernel width above which the interior is computed by FFT correlation.
const FFT_MIN_WIDTH: usize = 48;

/// Circular correlation `r[s] = sum_j k[j] x[s + j]` via one FFT pair.
#[derive(Clone)]
struct FftCorrelator {
    len: usize,
    kernel_conj: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftCorrelator {
    fn new(kernel: &[f64], len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut k: Vec<Complex64> =
            (0..len).map(|i| Complex64::new(kernel.get(i).copied().unwrap_or(0.0), 0.0)).collect();
        forward.process(&mut k);
        let scale = 1.0 / len as f64;
        Self { len, kernel_conj: k.iter().map(|c| c.conj() * scale).collect(), forward, inverse }
    }

    fn correlate(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_conj) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }
}

impl Lowess {
    pub fn plan(span: f64, len: usize) -> Result<Self> {
        if !(span > 0.0 && span <= 1.0) {
            return Err(Error::SpanTooSmall { span, len });
        }
        let width = ((span * len as f64) - 1e-9).ceil().max(0.0) as usize;
        if width < 3 || width > len {
            return Err(Error::SpanTooSmall { span, len });
        }
        let kernels: Vec<Vec<f64>> = (0..width).map(|o| local_linear_kernel(o, width)).collect();
        let interior = (width >= FFT_MIN_WIDTH).then(|| FftCorrelator::new(&kernels[(width - 1) / 2], len));
        Ok(Self { len, width, kernels, interior })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len {
            return Err(Error::DimensionMismatch(format!("LOWESS planned for {} samples, got {}", self.len, x.len())));
        }
        let (n, q) = (self.len, self.width);
        let half = (q - 1) / 2;
        let edge = |i: usize| {
            let lo = i.saturating_sub(half).min(n - q);
            dot(&self.kernels[i - lo], &x[lo..lo + q])
        };
        match &self.interior {
            None => Ok((0..n).map(edge).collect()),
            Some(corr) => {
                let r = corr.correlate(x);
                // Interior fits start their window at i - half.
                Ok((0..n).map(|i| if i >= half && i - half <= n - q { r[i - half] } else { edge(i) }).collect())
            }
        }
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Weights `l` such that the weighted linear fit at window position `offset`
/// equals `sum(l[j] * x[j])`.
fn local_linear_kernel(offset: usize, width: usize) -> Vec<f64> {
    let h = offset.max(width - 1 - offset) as f64;
    let u: Vec<f64> = (0..width).map(|j| j as f64 - offset as f64).collect();
    let w: Vec<f64> = u.iter().map(|d| tricube(d.abs() / h)).collect();
    let s0: f64 = w.iter().sum();
    let s1: f64 = w.iter().zip(&u).map(|(w, u)| w * u).sum();
    let s2: f64 = w.iter().zip(&u).map(|(w, u)| w * u * u).sum();
    let det = s0 * s2 - s1 * s1;
    if det <= 1e-12 * s0 * s2.max(1.0) {
        return w.iter().map(|wj| wj / s0).collect();
    }
    w.iter().zip(&u).map(|(wj, uj)| wj * (s2 - uj * s1) / det).collect()
}

/// Locally weighted linear regression over windows of `ceil(span * len)`
/// samples.
pub fn lowess(x: &[f64], span: f64) -> Result<Vec<f64>> {
    Lowess::plan(span, x.len())?.apply(x)
}

/// Zero-mean, unit population standard deviation.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: x.len() });
    }
    let m = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    let var = centred.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if !(var > 0.0) || var.sqrt() <= 1e-13 * m.abs() {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = centred.iter().map(|v| v / sd).collect();
    let residual = mean(&z);
    z.iter_mut().for_each(|v| *v -= residual);
    Ok(z)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    None,
    Hann,
}

impl Taper {
    /// Mainlobe half-width in bins, counted as zero for the rectangular
    /// window so the untapered ratio keeps the literal band.
    pub fn mainlobe_half_width_bins(self) -> f64 {
        match self {
            Taper::None => 0.0,
            Taper::Hann => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn bin_spacing_hz(&self) -> f64 {
        self.freqs_hz.get(1).copied().unwrap_or(0.0)
    }

    /// Frequency of the largest non-DC bin.
    pub fn peak_freq_hz(&self) -> f64 {
        let mut best = 1;
        for k in 1..self.power.len() {
            if self.power[k] > self.power[best] {
                best = k;
            }
        }
        self.freqs_hz[best.min(self.freqs_hz.len() - 1)]
    }
}

pub const MIN_SPECTRUM_LEN: usize = 16;

/// One-sided power spectrum planned for a fixed length.
///
/// Power is `|X_k|^2 / N`, doubled for bins that have a mirrored negative
/// frequency, so the bins sum to `sum(x^2)`.
pub struct Periodogram {
    len: usize,
    fs: f64,
    taper: Option<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl Periodogram {
    pub fn new(len: usize, fs: f64, taper: Taper) -> Result<Self> {
        if len < MIN_SPECTRUM_LEN {
            return Err(Error::TooShort { needed: MIN_SPECTRUM_LEN, got: len });
        }
        let taper = match taper {
            Taper::None => None,
            Taper::Hann => Some(
                (0..len)
                    .map(|i| {
                        let s = (std::f64::consts::PI * i as f64 / len as f64).sin();
                        s * s
                    })
                    .collect(),
            ),
        };
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Self { len, fs, taper, fft })
    }

    pub fn freqs_hz(&self) -> Vec<f64> {
        (0..=self.len / 2).map(|k| k as f64 * self.fs / self.len as f64).collect()
    }

    pub fn power(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "periodogram planned for {} samples, got {}",
                self.len,
                x.len()
            )));
        }
        let mut buf: Vec<Complex64> = match &self.taper {
            None => x.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
            Some(t) => x.iter().zip(t).map(|(v, w)| Complex64::new(v * w, 0.0)).collect(),
        };
        self.fft.process(&mut buf);
        let n = self.len;
        let norm = 1.0 / n as f64;
        Ok((0..=n / 2)
            .map(|k| {
                let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
                let p = buf[k].norm_sqr() * norm;
                if mirrored {
                    2.0 * p
                } else {
                    p
                }
            })
            .collect())
    }

    pub fn spectrum(&self, x: &[f64]) -> Result<Spectrum> {
        Ok(Spectrum { freqs_hz: self.freqs_hz(), power: self.power(x)? })
    }
}

/// One-sided power spectrum of `x` without a taper.
pub fn power_spectrum(x: &[f64], fs: f64) -> Result<Spectrum> {
    Periodogram::new(x.len(), fs, Taper::None)?.spectrum(x)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period);
    if r < n as isize {
        r as usize
    } else {
        (period - 1 - r) as usize
    }
}

/// Gaussian kernel truncated at ±4σ, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Convolution with a normalized Gaussian, half-sample reflect padding.
pub fn gaussian_smooth(v: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || v.is_empty() {
        return v.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let n = v.len();
    (0..n as isize)
        .map(|i| kernel.iter().enumerate().map(|(j, k)| k * v[reflect(i + j as isize - radius, n)]).sum())
        .collect()
}

/// Ordinary least squares of `y[k]` against `k`; returns (slope, intercept).
pub fn linfit(y: &[f64]) -> (f64, f64) {
    let n = y.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    if n == 1 {
        return (0.0, y[0]);
    }
    let xm = (n - 1) as f64 / 2.0;
    let ym = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (k, v) in y.iter().enumerate() {
        let dx = k as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (slope, ym - slope * xm)
}
