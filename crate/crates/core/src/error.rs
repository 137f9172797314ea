use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unreadable image {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("embedding backend: {0}")]
    Backend(String),

    #[error("codec {codec}: {reason}")]
    Codec { codec: String, reason: String },

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("malformed {what}: {reason}")]
    Parse { what: String, reason: String },
}

/// Broad error class, used by front ends to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Backend,
    Codec,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::InvalidInput(_) | Error::Parse { .. } => ErrorKind::Config,
            Error::Unreadable { .. }
            | Error::UnsupportedFormat(_)
            | Error::Io { .. }
            | Error::Dimension(_) => ErrorKind::Io,
            Error::Backend(_) => ErrorKind::Backend,
            Error::Codec { .. } => ErrorKind::Codec,
            Error::Eval(_) => ErrorKind::Config,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn codec(codec: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Codec {
            codec: codec.into(),
            reason: reason.into(),
        }
    }
}
