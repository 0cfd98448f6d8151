use std::path::PathBuf;

use rino::RinoError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failure of one pipeline stage. Each stage has its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data generation: {0}")]
    Datagen(RinoError),
    #[error("dictionary learning: {0}")]
    Dictionary(RinoError),
    #[error("operator training: {0}")]
    Operator(RinoError),
    #[error("evaluation: {0}")]
    Eval(RinoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Datagen(_) => 4,
            CliError::Dictionary(_) => 5,
            CliError::Operator(_) => 6,
            CliError::Eval(_) => 7,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
