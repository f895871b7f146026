use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid record {series_id:?}: {reason}")]
    InvalidRecord { series_id: String, reason: String },

    #[error("channel {channel} is degenerate (std = {std})")]
    DegenerateChannel { channel: &'static str, std: f64 },

    #[error("channel {channel} has no observed entries")]
    EmptyChannel { channel: &'static str },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("record of length {len} is shorter than the minimum window {min_len}")]
    TooShort { len: usize, min_len: usize },

    #[error("no observed target entries")]
    NoObservation,

    #[error("rank deficient system: {0}")]
    Rank(String),

    #[error("no convergence after {iterations} iterations (a={a}, b={b}, c={c})")]
    NoConvergence { iterations: usize, a: f64, b: f64, c: f64 },

    #[error("feature layout mismatch: {0}")]
    FeatureLayout(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("config key {key:?}: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
