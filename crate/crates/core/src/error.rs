use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A run configuration value is missing or out of range.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {reason}")]
    Trace { path: String, line: u64, reason: String },

    /// The I/O error is part of the message rather than a separate cause.
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("field already carries a fault")]
    AlreadyFaulty,

    #[error("report mismatch: {0}")]
    Mismatch(String),

    #[error("malformed report {path}: {reason}")]
    Report { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), cause: source }
    }
}
