use std::path::PathBuf;

use crate::eval::ModeCell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("kernel matrix of size {n} is not positive definite at jitter {jitter:e}")]
    Factorization { n: usize, jitter: f64 },

    #[error("equilibrium did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("mean tangent of segment {segment} is singular ({tangent:e} MPa)")]
    TangentSingular { segment: usize, tangent: f64 },

    #[error("load step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Divergence { iteration: usize, loss: f64 },

    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("operation requires {expected} mode")]
    InvalidMode { expected: &'static str },

    #[error("reference sequence has zero L2 norm")]
    ZeroReference,

    #[error("benchmark cell {cell} exceeded the wall-time cap of {cap_secs} s")]
    Timeout {
        cell: String,
        cap_secs: f64,
        partial: Vec<ModeCell>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
