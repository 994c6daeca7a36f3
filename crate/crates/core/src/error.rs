//! Error type shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file: the message carries the 1-based line (and where
    /// applicable column) of the offending cell.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A referenced detector name does not exist in the matrix.
    #[error("unknown detector column: {0}")]
    UnknownColumn(String),

    /// Detector names of two inputs do not line up.
    #[error("detector name mismatch: {0}")]
    NameMismatch(String),

    /// Numeric fitting failed in a way retries cannot repair.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// A matrix that must be positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
