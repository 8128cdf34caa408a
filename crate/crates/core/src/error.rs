use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("a0 is not bracketed in [delta, 1e6*delta] for delta = {delta}, l = {l}")]
    NoBracket { delta: f64, l: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("field has zero mass on the region")]
    ZeroMass,
    #[error("field is not supported inside the region where the scaling identity holds")]
    NotSupportedInRegion,
    #[error("conjugate gradient breakdown at iteration {iteration} (p·Ap = {curvature:e})")]
    CgBreakdown { iteration: usize, curvature: f64 },
    #[error("conjugate gradient did not reach {tol:e} in {max_iters} iterations (residual {residual:e})")]
    CgNotConverged { max_iters: usize, tol: f64, residual: f64 },
    #[error("non-finite value encountered: {0}")]
    Divergence(String),
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { key: key.to_string(), reason: reason.into() }
    }
}
