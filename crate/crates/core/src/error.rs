use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed document {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Validation(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("corrupt image {path}: {message}")]
    CorruptImage { path: PathBuf, message: String },

    #[error("image too small ({width}x{height}); both sides must be at least {min}")]
    Undersized { width: usize, height: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature file is missing {} id(s): {}", .0.len(), .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("{} record(s) failed extraction: {}", .0.len(), summarize_failures(.0))]
    ExtractionFailed(Vec<(String, String)>),

    #[error("{what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn summarize_failures(failures: &[(String, String)]) -> String {
    failures
        .iter()
        .map(|(id, msg)| format!("{id} ({msg})"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid_record(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidRecord {
            id: id.into(),
            reason: reason.into(),
        }
    }

    pub fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::NonFiniteLoss { .. } | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}
