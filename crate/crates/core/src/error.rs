use thiserror::Error;

/// Errors raised by data handling, model fitting and the importance estimators.
#[derive(Debug, Error)]
pub enum FiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("non-finite prediction at row {row}")]
    NonFinitePrediction { row: usize },

    #[error("csv error at row {row}, column '{column}': {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("singular covariance when conditioning on {given:?}; consider the knn conditional sampler")]
    SingularCovariance { given: Vec<String> },

    #[error("no closed-form oracle for subset {subset:?} of '{dgp}'")]
    UnsupportedOracle { dgp: String, subset: Vec<String> },

    #[error("unknown data-generating process '{name}' (available: {})", available.join(", "))]
    UnknownDgp { name: String, available: Vec<String> },

    #[error("fitting on feature subset {subset:?} failed: {message}")]
    Learner { subset: Vec<String>, message: String },

    #[error("computation failed: {0}")]
    Compute(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FiError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> FiError {
    FiError::InvalidArgument(msg.into())
}
