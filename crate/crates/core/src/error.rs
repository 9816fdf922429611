use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FouError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular kernel: diagonal cell {cell} is {value}")]
    SingularKernel { cell: usize, value: f64 },
    #[error("time {time} is not a grid point")]
    Alignment { time: f64 },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("insufficient samples: need at least {min}, got {got}")]
    InsufficientSamples { min: usize, got: usize },
    #[error("degenerate functional: {0}")]
    DegenerateFunctional(String),
    #[error("conditional-expectation estimator failed at slice {slice}: {reason}; try a larger batch or a smaller basis")]
    Estimator { slice: usize, reason: String },
    #[error("regularization failure at cell {cell}: {reason}")]
    Regularization { cell: usize, reason: String },
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
    #[error("derivative estimation failed: {0}")]
    DerivativeEstimation(String),
    #[error("unknown label `{label}`; expected one of {expected}")]
    UnknownLabel { label: String, expected: String },
}

pub type Result<T> = std::result::Result<T, FouError>;
