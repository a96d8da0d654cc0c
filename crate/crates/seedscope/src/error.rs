//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("column {0:?} not found in CSV header")]
    MissingColumn(String),

    #[error("no usable rows after dropping {dropped} rows with missing or non-numeric values")]
    NoUsableRows { dropped: usize },

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    /// Transient transport failure; callers may retry.
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },

    #[error("training size {requested} exceeds pool size {available}")]
    TrainingSizeExceedsPool { requested: usize, available: usize },

    #[error("results store at {path} was written with config hash {existing}, current config hashes to {current}")]
    StoreConfigMismatch {
        path: PathBuf,
        existing: String,
        current: String,
    },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("rank-deficient design matrix; offending columns: {0:?}")]
    RankDeficient(Vec<String>),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV parse error at {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether a retry could plausibly succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Network { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
