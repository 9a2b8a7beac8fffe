use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solvers, the degree machinery and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time step {dt} violates the stability bound {limit} ({reason})")]
    Stability { dt: f64, limit: f64, reason: &'static str },

    #[error("winding number undefined: {0}")]
    Winding(String),

    #[error("no zero located: {0}")]
    NoZero(String),

    #[error("trajectory integration failed at tau = {tau}: {reason}")]
    Trajectory { tau: f64, reason: String },

    #[error("snapshot {}: {reason}", path.display())]
    Snapshot { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
