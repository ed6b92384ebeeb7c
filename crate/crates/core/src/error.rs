use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported object: {0}")]
    UnsupportedObject(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
