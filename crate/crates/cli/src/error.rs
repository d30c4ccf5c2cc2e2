use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no fit: {0}")]
    NoFit(#[from] rbm_analysis::FitError),
    #[error(transparent)]
    Core(#[from] rbm_core::Error),
    #[error(transparent)]
    Train(#[from] rbm_train::TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} runs failed")]
    Runs {
        failed: usize,
        total: usize,
        capacity: bool,
    },
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const UNRELIABLE_TAU: i32 = 2;
    pub const CAPACITY: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const NO_FIT: i32 = 5;
}

fn is_capacity(e: &CliError) -> bool {
    match e {
        CliError::Core(rbm_core::Error::Capacity { .. }) => true,
        CliError::Train(rbm_train::TrainError::Core(rbm_core::Error::Capacity { .. })) => true,
        CliError::Runs { capacity, .. } => *capacity,
        _ => false,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        if is_capacity(self) {
            return exit::CAPACITY;
        }
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::NoFit(_) => exit::NO_FIT,
            _ => exit::FAILURE,
        }
    }
}
