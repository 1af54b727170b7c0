use thiserror::Error;

/// A failure together with the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric abort: {0}")]
    Numeric(String),
    #[error("gradient check failed: {0}")]
    CheckFailed(String),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::CheckFailed(_) => 4,
            CliError::Output(_) => 5,
        }
    }

    /// Classifies a library error raised while training or evaluating.
    pub fn from_run(e: tcc::Error) -> Self {
        use tcc::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::NonFiniteInput { .. } | E::DegenerateNorm { .. } => {
                CliError::Numeric(e.to_string())
            }
            E::Config(_) | E::UnknownParameter(_) | E::BadPolicy(_) | E::InvalidTemperature(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn output(e: impl std::fmt::Display) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
