//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Errors are grouped into three
//! kinds that the command-line frontend maps onto distinct process exit codes
//! (see [`crate::cli`]): configuration problems, malformed or inconsistent
//! data, and numerical failures detected mid-computation.

use thiserror::Error;

/// Coarse classification of an [`Error`], used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration: bad parameter values, inconsistent settings,
    /// unusable command-line arguments.
    Config,
    /// Invalid data: unreadable files, bad magic numbers, truncated payloads,
    /// schema violations, mismatched shapes.
    Data,
    /// Numerical failure: non-finite values produced where finite ones are
    /// required (diverged training, overflowing losses, NaN samples).
    Numerical,
}

/// Error type for all `duetgen` operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data is malformed, truncated, or inconsistent.
    #[error("invalid data: {0}")]
    Data(String),

    /// A computation produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Underlying I/O failure while reading or writing a file.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Shorthand for a [`Error::Config`] with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand for a [`Error::Data`] with a formatted message.
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Shorthand for a [`Error::Numerical`] with a formatted message.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Wrap an I/O error with the path it occurred on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The coarse kind of this error (drives the CLI exit code).
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Data(_) | Error::Io { .. } => ErrorKind::Data,
            Error::Numerical(_) => ErrorKind::Numerical,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
