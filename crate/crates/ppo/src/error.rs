use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite {what} in epoch {epoch}, minibatch {minibatch}; update aborted")]
    NonFinite { what: &'static str, epoch: usize, minibatch: usize },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PpoError>;
