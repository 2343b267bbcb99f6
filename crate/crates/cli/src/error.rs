use hycop::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("check failed: {0}")]
    Check(String),
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(location: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config { location: location.into(), message: message.to_string() }
    }

    /// 0 success, 2 configuration, 3 numerical failure, 4 failed `--check`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Check(_) => 4,
            CliError::Core(e) => match e {
                CoreError::ExecutionDiverged { .. }
                | CoreError::PolicyNumerical
                | CoreError::StiffnessCap { .. }
                | CoreError::ReferenceDiverged { .. }
                | CoreError::ZeroReference
                | CoreError::OrderUnmeasurable { .. } => 3,
                CoreError::InvalidConfig(_)
                | CoreError::UnknownIcFamily(_)
                | CoreError::MechanismMismatch { .. }
                | CoreError::InvalidGrid(_)
                | CoreError::BoundarySwapUnsupported(_) => 2,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}
