use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input has {got} frames but the network needs at least {min}")]
    TooShort { got: usize, min: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("missing {what} for utterance {id}")]
    Missing { what: &'static str, id: String },

    #[error("{0}")]
    Undefined(String),

    #[error("scoring utterance {id} failed: {source}")]
    Scoring {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
