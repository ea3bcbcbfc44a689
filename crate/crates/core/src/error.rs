use std::path::PathBuf;

use thiserror::Error;

use crate::datastore::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty wiki pool")]
    EmptyWikiPool,
    #[error("empty passage")]
    EmptyPassage,
    #[error("empty gold answer list")]
    NoGoldAnswers,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("unknown pair id {0:?}")]
    UnknownPair(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("annotation rejected: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Rejected(Vec<Violation>),
    #[error("unsupported model file version {0:?}")]
    ModelVersion(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
