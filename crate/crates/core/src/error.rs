use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no policy satisfies the cost limit {limit} (minimum achievable cost {min_cost})")]
    Infeasible { limit: f64, min_cost: f64 },

    #[error("dataset too small: {got} transitions, need at least {need}")]
    DatasetTooSmall { got: usize, need: usize },

    #[error("dynamics ensemble has not been trained")]
    Untrained,

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAborted { epoch: usize, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>, value: f64) -> Self {
        Error::NonFinite {
            context: context.into(),
            value,
        }
    }
}
