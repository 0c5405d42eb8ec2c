use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed image at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("pattern config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
