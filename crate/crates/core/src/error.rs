use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CsaError>;

#[derive(Debug, Error)]
pub enum CsaError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("context region is empty")]
    NoContext,

    #[error("hole region is empty")]
    NoHole,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CsaError {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        CsaError::Format {
            offset,
            message: message.into(),
        }
    }
}
