use num_complex::Complex64;
use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lambda = {lambda} is within {distance:e} of the spectrum")]
    SpectrumHit { lambda: Complex64, distance: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("regularizer is numerically singular (condition number {condition:e})")]
    DegenerateRegularizer { condition: f64 },

    #[error("derivative requested at support endpoint t = {0}")]
    EndpointSingularity(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
