use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index}: {message}")]
    Parse { index: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("tiling error: {0}")]
    Tiling(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("word {word:?} needs {needed} subwords, more than the limit of {limit}")]
    WordTooLong { word: String, needed: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad inputs or configuration, as opposed to
    /// failures that happen while doing the work (I/O, numerics).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Numeric(_) | Error::Json(_))
    }
}
