use std::path::PathBuf;

use crate::data::JoinReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{context}: {message}")]
    Malformed { context: String, message: String },

    #[error("{context}: dimension mismatch (expected {expected}, found {found})")]
    DimMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("{context}: duplicate key `{key}`")]
    DuplicateKey { context: String, key: String },

    #[error("{context}: non-finite value")]
    NonFinite { context: String },

    #[error("{context}: vector `{key}` is not unit-norm (norm {norm})")]
    NotUnitNorm {
        context: String,
        key: String,
        norm: f64,
    },

    #[error("missing embeddings for {} (sample, channel) pairs", .0.missing.len())]
    MissingEmbeddings(JoinReport),

    #[error("channel `{0}` is not available for this dataset")]
    MissingChannel(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-length vector has no direction")]
    ZeroVector,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("covariance factorization failed (last jitter tried: {jitter:e})")]
    Factorization { jitter: f64 },

    #[error("infeasible grid: {0}")]
    InfeasibleGrid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Malformed {
            context: context.into(),
            message: message.into(),
        }
    }
}
