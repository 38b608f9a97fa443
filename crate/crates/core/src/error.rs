use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: observed has {observed} windows, modeled has {modeled}")]
    LengthMismatch { observed: usize, modeled: usize },

    #[error("no events for object `{0}`")]
    UnknownObject(String),

    #[error("nothing passed the filter: {0}")]
    EmptySelection(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
