use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite parameter after epoch {epoch}: {detail}")]
    NonFinite { epoch: f64, detail: String },
    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error(transparent)]
    Core(#[from] rbm_core::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
