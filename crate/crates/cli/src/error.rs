use bcsac_core::difficulty::DifficultyError;
use bcsac_core::envsim::EnvError;
use bcsac_core::learners::LearnError;
use bcsac_core::neural::CheckpointError;
use bcsac_core::runtime::RuntimeError;
use bcsac_core::scenario::ScenarioError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{what} not found at {path}; {hint}")]
    Missing { what: &'static str, path: String, hint: &'static str },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Difficulty(#[from] DifficultyError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Stable identifier for the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Missing { .. } => "missing-input",
            CliError::Scenario(_) => "scenario",
            CliError::Learn(_) => "learn",
            CliError::Runtime(RuntimeError::Config(_)) => "config",
            CliError::Runtime(_) => "runtime",
            CliError::Env(_) => "environment",
            CliError::Difficulty(_) => "difficulty",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "missing-input" => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
