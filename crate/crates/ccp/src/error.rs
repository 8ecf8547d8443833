use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument for {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{op} did not converge: {detail}")]
    NoConvergence { op: &'static str, detail: String },

    #[error("quadrature tolerance not met: best estimate {estimate:e}, error bound {error:e}")]
    QuadratureTolerance { estimate: f64, error: f64 },

    #[error("required sample size exceeds {limit}: {detail}")]
    SizeOverflow { limit: u64, detail: String },

    #[error("translated tolerance is zero at epsilon = {epsilon}: the uncertainty set is too large, no finite Monte Carlo size exists")]
    ZeroTolerance { epsilon: f64 },

    #[error("target {target} is unattainable for {op}")]
    Unattainable { op: &'static str, target: f64 },

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
