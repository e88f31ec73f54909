use thiserror::Error;

/// Error type shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is out of its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Malformed input data (CSV layout, negative weights, ...).
    #[error("data format: {0}")]
    Format(String),

    /// A computation produced non-finite values or failed to converge
    /// where convergence is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A stored model file does not match this library version or the
    /// requested architecture.
    #[error("model version mismatch: {0}")]
    Version(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
