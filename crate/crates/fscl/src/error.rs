//! Crate-wide error type.

/// Errors produced by model fitting, estimation, testing and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A sub-likelihood or derivative evaluated to a non-finite value.
    #[error("numeric domain error in sub-likelihood {index}: {message}")]
    NumericDomain { index: usize, message: String },

    /// A covariance or Hessian could not be factorized even after conditioning.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// The ordered-gamma density series did not meet its tail bound at `r_max`.
    #[error("series not converged at r_max = {r_max}: {message}; increase r_max")]
    SeriesNotConverged { r_max: usize, message: String },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code: 2 for input errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Io(_) | Error::Parse(_) => 2,
            Error::NumericDomain { .. }
            | Error::Conditioning(_)
            | Error::SeriesNotConverged { .. }
            | Error::Quadrature(_) => 3,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NumericDomain { .. } => "numeric_domain",
            Error::Conditioning(_) => "conditioning",
            Error::SeriesNotConverged { .. } => "series_not_converged",
            Error::Quadrature(_) => "quadrature",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
