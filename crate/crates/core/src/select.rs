//! Breathing-to-noise ratio and the hybrid percentile/floor threshold that
//! screens out subcarriers with little energy in the respiration band.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{Periodogram, Taper};
use crate::error::{Error, Result};
use crate::preprocess::WaveformMatrix;

pub const RESPIRATION_BAND_HZ: (f64, f64) = (0.16, 0.5);

/// In-band over out-of-band power for one spectrum; the DC bin is ignored.
fn ratio_from_power(power: &[f64], freqs: &[f64], band: (f64, f64)) -> f64 {
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (p, f) in power.iter().zip(freqs).skip(1) {
        if *f >= band.0 && *f <= band.1 {
            inside += p;
        } else {
            outside += p;
        }
    }
    let total = inside + outside;
    if total == 0.0 {
        return 0.0;
    }
    inside / outside.max(1e-12 * total)
}

/// BNR of one zero-mean row over the closed band `band`.
pub fn bnr(row: &[f64], fs: f64, band: (f64, f64)) -> Result<f64> {
    let p = Periodogram::new(row.len(), fs, Taper::None)?;
    Ok(ratio_from_power(&p.power(row)?, &p.freqs_hz(), band))
}

/// BNR of every row, sharing one FFT plan.
pub fn bnr_rows(wm: &WaveformMatrix, band: (f64, f64), taper: Taper) -> Result<Vec<f64>> {
    let p = Periodogram::new(wm.n_samples(), wm.sample_rate_hz, taper)?;
    let freqs = p.freqs_hz();
    // A taper spreads a tone over its mainlobe; widen the band by that much
    // so a rate just inside an edge keeps all of its power in band.
    let guard = taper.mainlobe_half_width_bins() * freqs[1];
    let band = (band.0 - guard, band.1 + guard);
    (0..wm.n_rows())
        .into_par_iter()
        .map(|r| {
            let row = wm.g.row(r).to_vec();
            Ok(ratio_from_power(&p.power(&row)?, &freqs, band))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectParams {
    /// Percentile (0-100) of the BNR distribution used as adaptive threshold.
    pub percentile: f64,
    /// Fixed quality floor; `f64::NEG_INFINITY` disables it.
    pub floor: f64,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self { percentile: 80.0, floor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnrTable {
    pub bnr: Vec<f64>,
    pub threshold_used: f64,
    pub retained: Vec<usize>,
}

/// Linear-interpolation percentile (the numpy default definition).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Retain subcarriers with `bnr >= max(P_pct(bnr), floor)`.
pub fn select(bnrs: &[f64], params: &SelectParams) -> Result<BnrTable> {
    if bnrs.len() < crate::trace::MIN_SUBCARRIERS {
        return Err(Error::TooFew { needed: crate::trace::MIN_SUBCARRIERS, got: bnrs.len() });
    }
    if bnrs.iter().any(|b| b.is_nan() || *b < 0.0) {
        return Err(Error::InvalidValue("BNR values must be nonnegative".into()));
    }
    let threshold = percentile(bnrs, params.percentile).max(params.floor);
    let retained: Vec<usize> = (0..bnrs.len()).filter(|&k| bnrs[k] >= threshold).collect();
    if retained.is_empty() {
        return Err(Error::NoViableSubcarriers { threshold });
    }
    Ok(BnrTable { bnr: bnrs.to_vec(), threshold_used: threshold, retained })
}
