//! Respiration sensing from single-antenna WiFi CSI amplitudes.
//!
//! The crate covers a multipath channel simulator with ground truth, the
//! recovery pipeline (per-subcarrier smoothing, band-power selection, signed
//! spectral grouping and fusion, inhalation/exhalation identification),
//! respiratory biomarkers and evaluation metrics.

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biomarkers;
pub mod dsp;
pub mod error;
pub mod grouping;
pub mod io;
pub mod metrics;
pub mod phase;
pub mod pipeline;
pub mod preprocess;
pub mod select;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
