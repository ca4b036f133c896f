use powrl_core::controller::ControllerError;
use powrl_core::environment::EnvError;
use powrl_core::evaluation::EvalError;
use powrl_core::ppo::{CheckpointError, TrainError};
use powrl_core::scenario::log::LogError;
use powrl_core::scenario::ScenarioError;

/// Failure of a command, classified by the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Data(e.to_string()),
            other => CliError::Data(format!("checkpoint: {other}")),
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DimensionMismatch { .. } | EvalError::MissingPolicy => CliError::Data(e.to_string()),
            EvalError::Controller(ControllerError::GridMismatch { .. }) => CliError::Data(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NoChronics | TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Controller(ControllerError::GridMismatch { .. }) => CliError::Data(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::ChronicMismatch(_) | EnvError::EmptyChronic => CliError::Data(e.to_string()),
            EnvError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::GridMismatch { .. } => CliError::Data(e.to_string()),
            ControllerError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
