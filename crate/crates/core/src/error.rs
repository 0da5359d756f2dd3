use thiserror::Error;

/// Error type shared across the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (CSV, JSON, cache, checkpoint).
    #[error("parse error: {0}")]
    Parse(String),

    /// Invalid configuration (band edges, window sizes, split fractions).
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates an operation's precondition.
    #[error("data error: {0}")]
    Data(String),

    /// Tensor / layer shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Event extraction could not produce a consistent event sequence.
    #[error("event extraction error: {0}")]
    Extraction(String),

    /// Training diverged or hit an invalid numeric state.
    #[error("training error: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
