use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the representation-learning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("duplicate note for patient {patient_id} with order key {order_key} (line {line})")]
    DuplicateNote {
        patient_id: String,
        order_key: i64,
        line: usize,
    },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vocabulary mismatch: model was built for a different vocabulary")]
    VocabularyMismatch,

    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("model container: {0}")]
    Container(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
