use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gradient is not defined for the {0} loss")]
    UnsupportedGradient(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("query budget exhausted for client {client} ({max} queries allowed)")]
    BudgetExceeded { client: usize, max: usize },

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
