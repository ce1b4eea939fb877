use thiserror::Error;

/// Errors raised by the library. CLI exit codes are derived from the variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid geometry: capture probability {0} is not below 1")]
    InvalidGeometry(f64),

    #[error("length mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("message index {index} out of range 1..={size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("support error: {0}")]
    Support(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("invariant `{name}` violated: {detail}")]
    Invariant { name: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
