use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("incompatible: {0}")]
    Incompatible(String),
    #[error("unsupported object: {0}")]
    UnsupportedObject(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("runtime fault: {0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] reposer_core::CoreError),
    #[error(transparent)]
    Ppo(reposer_ppo::PpoError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<reposer_ppo::PpoError> for HarnessError {
    fn from(e: reposer_ppo::PpoError) -> Self {
        match e {
            reposer_ppo::PpoError::Incompatible(m) => HarnessError::Incompatible(m),
            other => HarnessError::Ppo(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
