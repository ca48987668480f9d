//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    Shape {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: file truncated after line {last_good_line}: {message}")]
    Truncated {
        path: PathBuf,
        last_good_line: usize,
        message: String,
    },

    #[error("{path}: unsupported format version {found:?} (expected {expected:?})")]
    Version {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("regression for slot {slot} failed: {source}")]
    SlotFit {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("MPC problem is infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Rejects NaN and infinities with a message naming the offending quantity.
pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}
