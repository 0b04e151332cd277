use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("bounds error{}: event ({x}, {y}) outside {width}x{height}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Bounds {
        line: Option<usize>,
        x: u64,
        y: u64,
        width: u16,
        height: u16,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown class {0:?}")]
    UnknownClass(String),

    #[error("unknown record {0:?}")]
    UnknownRecord(String),

    #[error("record {id}: illegal status transition {from} -> {to}")]
    Transition { id: String, from: String, to: String },

    #[error("caption client: {0}")]
    Client(#[from] crate::caption::ClientError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
