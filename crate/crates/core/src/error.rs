use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ZslError>;

#[derive(Debug, Error)]
pub enum ZslError {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("line {line}: expected dimension {expected}, found {found}")]
    Dimension { line: u64, expected: usize, found: usize },

    #[error("line {line}: unknown or invalid class reference `{class_id}`: {msg}")]
    Reference { line: u64, class_id: String, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("class `{0}` is listed as both seen and unseen")]
    Partition(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A non-finite value showed up while evaluating or differentiating.
    #[error("non-finite value in `{0}`")]
    Numeric(String),

    #[error("training diverged at epoch {epoch} ({stage}): {source}")]
    Diverged {
        epoch: usize,
        stage: &'static str,
        #[source]
        source: Box<ZslError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ZslError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZslError::Io { path: path.into(), source }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        ZslError::Argument(msg.into())
    }
}
