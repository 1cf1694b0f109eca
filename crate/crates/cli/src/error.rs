use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Maps errors raised while building a model.
    pub fn from_core(e: metapop::Error) -> Self {
        match e {
            metapop::Error::Parse(m) => CliError::Config(m),
            metapop::Error::InvalidModel(m) => CliError::Validation(m),
            other => CliError::Runtime(other.to_string()),
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}
