use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("task infeasible: {0}")]
    Infeasible(String),

    #[error("not enough visible points: requested {requested}, visible {visible}")]
    NotEnoughPoints { requested: usize, visible: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("data collection aborted: {0}")]
    CollectionAborted(String),

    #[error("provenance mismatch: expected config hash {expected}, found {found}")]
    ProvenanceMismatch { expected: String, found: String },

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
