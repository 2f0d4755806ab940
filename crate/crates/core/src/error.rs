//! Error types shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed image file; `offset` is the byte position where parsing failed.
    #[error("{path}: {message} (byte {offset})")]
    Format {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// NaN/Inf or positivity breakdown detected during iteration.
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for CLI reporting: 2 usage, 3 I/O or format, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::DegenerateInput(_) => 2,
            Error::Format { .. } | Error::UnsupportedFormat(_) | Error::Io(_) => 3,
            Error::Numerical { .. } => 4,
        }
    }
}
