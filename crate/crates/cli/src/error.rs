use thiserror::Error;

use crate::config::ConfigError;

/// Top-level failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<soed_agent::TrainError> for CliError {
    fn from(e: soed_agent::TrainError) -> Self {
        match e {
            soed_agent::TrainError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
