use thiserror::Error;

/// Errors produced by the pipeline building blocks.
#[derive(Debug, Error)]
pub enum HarError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("filter error: {0}")]
    Filter(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("embedding backend error: {0}")]
    Backend(String),

    #[error("image codec error: {0}")]
    Image(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarError::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        HarError::Data(msg.into())
    }
}

pub type Result<T, E = HarError> = std::result::Result<T, E>;
