use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category; the CLI maps it onto an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("target column not found: {0:?}")]
    TargetNotFound(String),
    #[error("column {column:?} has no present values to fill from")]
    AllMissing { column: String },
    #[error("column {column:?}, row {row}: cannot parse {value:?} as a number")]
    Unparsable {
        column: String,
        row: usize,
        value: String,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("cannot train {algorithm}: {reason}")]
    Degenerate {
        algorithm: &'static str,
        reason: String,
    },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Read { .. }
            | Error::Parse { .. }
            | Error::TargetNotFound(_)
            | Error::AllMissing { .. }
            | Error::Unparsable { .. }
            | Error::InvalidInput(_) => ErrorKind::Data,
            Error::Write { .. }
            | Error::Dimension { .. }
            | Error::Degenerate { .. }
            | Error::Singular(_)
            | Error::Json(_) => ErrorKind::Internal,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
