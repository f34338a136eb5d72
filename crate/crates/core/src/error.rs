//! Crate-wide error type.

use std::fmt;
use std::io;

/// Errors raised by simulation, the feature pipeline, learning, and I/O.
#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument or configuration was violated.
    InvalidInput(String),
    /// A file or text block failed to parse; `line` is 1-based.
    Parse {
        path: Option<String>,
        line: usize,
        message: String,
    },
    /// An I/O failure, annotated with the path that was touched.
    Io { path: String, source: io::Error },
    /// A vector or row does not match the schema a model was built for.
    SchemaMismatch(String),
    /// A model was asked to classify before a threshold was calibrated.
    Uncalibrated,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Parse { path, line, message } => match path {
                Some(p) => write!(f, "{p}:{line}: {message}"),
                None => write!(f, "line {line}: {message}"),
            },
            Error::Io { path, source } => write!(f, "{path}: {source}"),
            Error::SchemaMismatch(msg) => write!(f, "schema mismatch: {msg}"),
            Error::Uncalibrated => write!(f, "model has no calibrated threshold"),
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
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(path: Option<&str>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.map(str::to_owned),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
