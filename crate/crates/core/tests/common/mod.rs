//! Scene generators shared by the integration and acceptance tests.

#![allow(dead_code)]

use csi_breath::sim::{BreathProfile, PathSpec, SceneSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Random feasible geometry: path difference in [0.6, 3] m at 160 MHz,
/// rate uniform in [10, 30] bpm.
pub fn feasible_scene(seed: u64, snr_db: Option<f64>) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let los = rng.random_range(2.0..6.0);
    let delta = rng.random_range(0.6..3.0);
    SceneSpec {
        los: PathSpec::new(1.0, 0.0, los),
        chest_rest: PathSpec::new(rng.random_range(0.1..0.5), 0.0, los + delta),
        vartheta_rad: rng.random_range(0.0..TAU),
        chest_delta_m: rng.random_range(4.2e-3..5.4e-3),
        breath: BreathProfile::new(rng.random_range(10.0..30.0), 1.0),
        noise_snr_db: snr_db,
        ..Default::default()
    }
}

/// Geometry that makes the band as Case-3 heavy as possible for a given
/// path difference: largest excursion, highest carrier and the centre
/// subcarrier's phase interval centred on π.
pub fn worst_case_scene(path_delta_m: f64, rate_bpm: f64) -> SceneSpec {
    let mut scene = SceneSpec {
        los: PathSpec::new(1.0, 0.0, 4.0),
        chest_rest: PathSpec::new(0.3, 0.0, 4.0 + path_delta_m),
        chest_delta_m: 5.4e-3,
        center_freq_hz: 7.1e9,
        breath: BreathProfile::new(rate_bpm, 1.0),
        ..Default::default()
    };
    let (lo, hi) = scene.theta_interval(scene.center_freq_hz);
    scene.vartheta_rad += PI - 0.5 * (lo + hi);
    scene
}

/// Signed ±1 block matrix for two planted groups of `half` nodes, each
/// off-diagonal sign flipped with probability `flip`. Returns the matrix
/// and the planted membership of group 1.
pub fn planted_blocks(half: usize, flip: f64, rng: &mut ChaCha8Rng) -> (ndarray::Array2<f64>, Vec<bool>) {
    let n = 2 * half;
    let mut truth: Vec<bool> = (0..n).map(|i| i < half).collect();
    truth.shuffle(rng);
    let mut w = ndarray::Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = if truth[i] == truth[j] { 1.0 } else { -1.0 };
            if rng.random::<f64>() < flip {
                v = -v;
            }
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    (w, truth)
}
