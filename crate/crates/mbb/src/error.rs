use thiserror::Error;

/// Unified error type for the crate's fallible surfaces.
#[derive(Debug, Error)]
pub enum MbbError {
    /// Invalid configuration or mismatched dimensions supplied by the caller.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine failed to make progress (solver divergence,
    /// non-finite values, empty dataset).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MbbError>;
