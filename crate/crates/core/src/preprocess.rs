//! Per-subcarrier denoising: Savitzky-Golay, then LOWESS, then z-scoring.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::dsp::{self, Lowess, SavitzkyGolay};
use crate::error::{Error, Result};
use crate::trace::CsiTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessParams {
    pub sg_window: usize,
    pub sg_order: usize,
    pub lowess_span: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self { sg_window: 11, sg_order: 3, lowess_span: 0.05 }
    }
}

/// Normalized preliminary waveforms, one row per surviving subcarrier, in
/// frequency order.
///
/// `smoothed` keeps the Savitzky-Golay output in amplitude units for the same
/// rows; the cross-frequency trend used for phase identification lives there
/// and is destroyed by z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformMatrix {
    pub g: Array2<f64>,
    pub smoothed: Array2<f64>,
    pub subcarrier_index_map: Vec<usize>,
    pub freqs_hz: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Original indices dropped for zero variance after smoothing.
    pub dropped: Vec<usize>,
}

impl WaveformMatrix {
    pub fn n_rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.g.ncols()
    }

    /// Keep only `rows` (positions into this matrix), preserving their order.
    pub fn select_rows(&self, rows: &[usize]) -> WaveformMatrix {
        WaveformMatrix {
            g: self.g.select(Axis(0), rows),
            smoothed: self.smoothed.select(Axis(0), rows),
            subcarrier_index_map: rows.iter().map(|&r| self.subcarrier_index_map[r]).collect(),
            freqs_hz: rows.iter().map(|&r| self.freqs_hz[r]).collect(),
            sample_rate_hz: self.sample_rate_hz,
            dropped: self.dropped.clone(),
        }
    }
}

pub fn extract_preliminary(trace: &CsiTrace, params: &PreprocessParams) -> Result<WaveformMatrix> {
    let l = trace.n_samples();
    let sg = SavitzkyGolay::new(params.sg_window, params.sg_order).map_err(|_| Error::BadWindow {
        window: params.sg_window,
        order: params.sg_order,
        len: l,
    })?;
    let lowess = Lowess::plan(params.lowess_span, l)?;
    if l < params.sg_window {
        return Err(Error::BadWindow { window: params.sg_window, order: params.sg_order, len: l });
    }

    let columns: Vec<Vec<f64>> = trace.amplitudes().axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let rows: Vec<Option<(Vec<f64>, Vec<f64>)>> = columns
        .par_iter()
        .map(|col| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
            let smoothed = sg.apply(col)?;
            let extracted = lowess.apply(&smoothed)?;
            Ok(match dsp::zscore(&extracted) {
                Ok(z) => Some((z, smoothed)),
                Err(Error::ZeroVariance) => None,
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut index_map = Vec::new();
    let mut dropped = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        if r.is_some() {
            index_map.push(k);
        } else {
            dropped.push(k);
        }
    }
    if index_map.is_empty() {
        return Err(Error::AllSubcarriersDegenerate);
    }
    let kept = index_map.len();
    let mut g = Array2::zeros((kept, l));
    let mut smoothed = Array2::zeros((kept, l));
    for (row, (z, s)) in rows.into_iter().flatten().enumerate() {
        g.row_mut(row).assign(&ndarray::ArrayView1::from(&z));
        smoothed.row_mut(row).assign(&ndarray::ArrayView1::from(&s));
    }
    let freqs = index_map.iter().map(|&k| trace.subcarrier_freqs_hz()[k]).collect();
    Ok(WaveformMatrix {
        g,
        smoothed,
        subcarrier_index_map: index_map,
        freqs_hz: freqs,
        sample_rate_hz: trace.sample_rate_hz(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pcc;
    use crate::select::bnr;
    use crate::sim::{simulate_trace, SceneSpec};
    use std::f64::consts::PI;

    fn case1_scene() -> SceneSpec {
        let mut scene = SceneSpec { noise_snr_db: None, ..SceneSpec::default() };
        // Narrow the band so every subcarrier stays in Case 1.
        scene.bandwidth_hz = 20e6;
        let (lo, hi) = scene.theta_interval(scene.center_freq_hz);
        scene.vartheta_rad += 0.5 * PI - 0.5 * (lo + hi);
        scene
    }

    #[test]
    fn rows_follow_displacement_in_case1() {
        let scene = case1_scene();
        let (trace, truth) = simulate_trace(&scene, 30.0, 100.0, 16, 0).unwrap();
        let wm = extract_preliminary(&trace, &PreprocessParams::default()).unwrap();
        assert_eq!(wm.n_rows(), 16);
        for row in wm.g.rows() {
            let r = pcc(row.as_slice().unwrap(), truth.displacement()).unwrap();
            assert!(r.abs() >= 0.99, "{r}");
            let m = row.mean().unwrap();
            let v = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let freqs: Vec<f64> = (0..8).map(|k| 6e9 + k as f64 * 1e6).collect();
        let ts: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        let trace = CsiTrace::new(100.0, 6e9, 20e6, freqs, ts, Array2::from_elem((1000, 8), 0.7)).unwrap();
        assert!(matches!(
            extract_preliminary(&trace, &PreprocessParams::default()),
            Err(Error::AllSubcarriersDegenerate)
        ));
    }

    #[test]
    fn dead_subcarrier_is_dropped_and_recorded() {
        let scene = case1_scene();
        let (trace, _) = simulate_trace(&scene, 12.0, 100.0, 8, 0).unwrap();
        let mut amps = trace.amplitudes().clone();
        amps.column_mut(3).fill(1.25);
        let trace = CsiTrace::new(
            100.0,
            trace.center_freq_hz(),
            trace.bandwidth_hz(),
            trace.subcarrier_freqs_hz().to_vec(),
            trace.timestamps_s().to_vec(),
            amps,
        )
        .unwrap();
        let wm = extract_preliminary(&trace, &PreprocessParams::default()).unwrap();
        assert_eq!(wm.dropped, vec![3]);
        assert_eq!(wm.subcarrier_index_map, vec![0, 1, 2, 4, 5, 6, 7]);
    }

    #[test]
    fn smoothing_raises_respiration_band_share() {
        let mut scene = case1_scene();
        scene.noise_snr_db = Some(10.0);
        let (trace, _) = simulate_trace(&scene, 30.0, 100.0, 16, 5).unwrap();
        let wm = extract_preliminary(&trace, &PreprocessParams::default()).unwrap();
        for (row, &k) in wm.g.rows().into_iter().zip(&wm.subcarrier_index_map) {
            let raw = dsp::zscore(&trace.subcarrier(k)).unwrap();
            let before = bnr(&raw, 100.0, (0.16, 0.5)).unwrap();
            let after = bnr(row.as_slice().unwrap(), 100.0, (0.16, 0.5)).unwrap();
            assert!(after > before, "{after} <= {before}");
        }
    }

    #[test]
    fn subcarrier_processing_is_independent() {
        let mut scene = case1_scene();
        scene.noise_snr_db = Some(15.0);
        let (trace, _) = simulate_trace(&scene, 12.0, 100.0, 8, 9).unwrap();
        let wm = extract_preliminary(&trace, &PreprocessParams::default()).unwrap();
        // Reversing the column order (with fresh increasing frequencies) must
        // reverse the rows.
        let mut amps = trace.amplitudes().clone();
        amps.invert_axis(Axis(1));
        let rev = CsiTrace::new(
            100.0,
            trace.center_freq_hz(),
            trace.bandwidth_hz(),
            trace.subcarrier_freqs_hz().to_vec(),
            trace.timestamps_s().to_vec(),
            amps.as_standard_layout().to_owned(),
        )
        .unwrap();
        let wr = extract_preliminary(&rev, &PreprocessParams::default()).unwrap();
        for r in 0..8 {
            assert_eq!(wm.g.row(r), wr.g.row(7 - r));
        }
    }
}
