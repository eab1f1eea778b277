use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("constraint matrix is not positive definite (pivot {index} = {pivot:e})")]
    IndefiniteConstraint { index: usize, pivot: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("shoulders coincide in the horizontal plane; orientation is undefined")]
    DegenerateOrientation,

    #[error("degenerate skeleton: reference length {0:e}")]
    DegenerateSkeleton(f64),

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("fit failed: {0}")]
    Fit(#[source] Box<Error>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidDimension(_) | Error::DimensionMismatch { .. } => ErrorKind::Config,
            Error::IndefiniteConstraint { .. } | Error::Fit(_) => ErrorKind::Numerical,
            Error::Frame { source, .. } => source.kind(),
            Error::Schema(_)
            | Error::DegenerateOrientation
            | Error::DegenerateSkeleton(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Protocol(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
