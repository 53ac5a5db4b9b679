use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("diverged at iteration {t}: non-finite update (norm {norm})")]
    Divergence { t: u64, norm: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroRow { row: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("PL violation: gradient vanishes at a point with f(x) - f* = {gap}")]
    PlViolation { gap: f64 },

    #[error("unsupported schema version {0:?}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
