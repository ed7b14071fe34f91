use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("input contains no records")]
    Empty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("exposure prior {value} for pair ({user}, {item}) is outside [0, 1]")]
    PriorOutOfRange { user: usize, item: usize, value: f64 },

    #[error("observed pair ({user}, {item}) has a zero exposure prior")]
    ZeroExposureObserved { user: usize, item: usize },

    #[error("non-finite value in {stage} at EM iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },

    #[error("exposure SGD diverged at epoch {epoch} (objective {objective} vs initial {initial}); try a smaller learning_rate")]
    Diverged { epoch: usize, objective: f64, initial: f64 },

    #[error("no user has a relevant item in the evaluation target")]
    NoEvaluableUsers,
}
