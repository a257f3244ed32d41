use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {m} exceeds the configured maximum {max}")]
    DimensionTooLarge { m: usize, max: usize },

    #[error("dimension must be at least 1")]
    EmptyDimension,

    #[error("entry ({row}, {col}) of the data matrix is not binary")]
    NonBinaryEntry { row: usize, col: usize },

    #[error("index set must be nonempty")]
    EmptyIndexSet,

    #[error("coordinate index {index} out of range for dimension {m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("marginal {index} is degenerate (shape parameter not positive)")]
    DegenerateMarginal { index: usize },

    #[error("correlation matrix is invalid: {0}")]
    InvalidCorrelation(String),

    #[error("Cholesky factorisation failed: {0}")]
    CholeskyFailure(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no nonnegative parameter vector satisfies the first-order moment constraints")]
    EqualityInfeasible,

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("concentration vector has no positive entry")]
    AllZeroGamma,

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("Monte Carlo budget of {max_samples} samples exhausted before reaching tolerance")]
    BudgetExceeded { max_samples: usize },

    #[error("at least {required} posterior draws are required, got {found}")]
    InsufficientSamples { required: usize, found: usize },

    #[error("contrast covariance has a zero variance in row {row}")]
    SingularContrastCovariance { row: usize },

    #[error("scenario is infeasible: {0}")]
    InfeasibleScenario(String),

    #[error("full parametrisation required: {0}")]
    FullParametrisationRequired(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
