use thiserror::Error;

/// Failures of a CLI command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file or flags; exit status 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// I/O or solver failure after the configuration was accepted; exit status 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
