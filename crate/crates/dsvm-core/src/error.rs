//! Error type shared across the crate.

use std::fmt;

/// Errors produced by model construction, data loading, training and I/O.
#[derive(Debug)]
pub enum Error {
    /// A documented precondition of an operation was violated.
    Contract(String),
    /// Invalid or inconsistent configuration.
    Config(String),
    /// Dataset layout or content problem.
    Data(String),
    /// A loss or feature became non-finite; the message names the first
    /// offending term.
    NonFinite(String),
    /// Checkpoint serialization / deserialization problem.
    Checkpoint(String),
    /// Underlying I/O failure with the path it happened on.
    Io { path: String, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
