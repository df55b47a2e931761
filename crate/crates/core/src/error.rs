use thiserror::Error;

use crate::model::ModelError;
use crate::store::StoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("unsupported Sobol dimension {0} (maximum is {max})", max = crate::qmc::MAX_DIMENSION)]
    UnsupportedDimension(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid pipeline: {0}")]
    Pipeline(String),

    #[error("invalid request {id}: {reason}")]
    Request { id: u64, reason: String },

    #[error("model produced a non-finite output at ensemble row {row}")]
    PoisonedSample { row: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("engine invariant violated: {0}")]
    Invariant(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
