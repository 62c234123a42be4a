use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("timestamps not strictly increasing and uniform at row {row}")]
    NonMonotonicTime { row: usize },

    #[error("subcarrier frequencies not strictly increasing at index {index}")]
    FreqOrder { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("phase span {span:.4} rad is not below pi")]
    SpanTooWide { span: f64 },

    #[error("bad Savitzky-Golay window {window} for order {order} and length {len}")]
    BadWindow { window: usize, order: usize, len: usize },

    #[error("LOWESS span {span} leaves fewer than 3 points out of {len}")]
    SpanTooSmall { span: f64, len: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("series too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("every subcarrier is degenerate after smoothing")]
    AllSubcarriersDegenerate,

    #[error("no subcarrier reaches the BNR threshold {threshold:.3}")]
    NoViableSubcarriers { threshold: f64 },

    #[error("partition has no usable subcarriers")]
    EmptyPartition,

    #[error("contiguous subcarrier set has {got} members, need at least 3")]
    SetTooSmall { got: usize },

    #[error("cross-subcarrier amplitude trend is indistinguishable from zero")]
    AmbiguousTrend,

    #[error("fewer than two breaths found")]
    NoBreathsFound,

    #[error("waveform orientation is ambiguous")]
    PhaseUnresolved,

    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("waveform and ground truth do not overlap by at least 10 s")]
    NoOverlap,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure { path: path.into(), source }
    }
}
