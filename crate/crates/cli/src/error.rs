use qem_core::QemError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] QemError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for invalid input, 3 for circuits too large to simulate, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(QemError::Capacity { .. }) => 3,
            CliError::Core(
                QemError::InvalidNoise(_)
                | QemError::InvalidArgument(_)
                | QemError::InvalidSupport(_)
                | QemError::MissingCost(_)
                | QemError::Parse { .. }
                | QemError::Threshold(_),
            ) => 2,
            _ => 1,
        }
    }

    /// A hint printed after the message.
    pub fn hint(&self) -> Option<String> {
        match self {
            CliError::Core(QemError::Capacity { limit, .. }) => Some(format!(
                "exact simulation is limited to {limit} qubits; use `qem cost` to analyse larger circuits"
            )),
            _ => None,
        }
    }
}
