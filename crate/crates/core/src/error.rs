use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("spectrum is not separated: {0}")]
    Unseparated(String),

    #[error("assumption precondition violated: {0}")]
    Precondition(String),

    #[error("ridge penalty {lambda} is at or below the admissible bound {bound} (min eigenvalue {min_eig})")]
    RidgeBelowBound { lambda: f64, bound: f64, min_eig: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("replicate {replicate} failed: {reason}")]
    ReplicateFailed { replicate: u64, reason: String },

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
