use thiserror::Error;

/// Errors produced by the numerical machinery.
///
/// `InvalidParameter` and `MapValidation` correspond to rejecting an
/// ill-formed request (CLI exit code 2); the remaining variants signal
/// numerical failures discovered while running (CLI exit code 3).
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("map validation failed: {0}")]
    MapValidation(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudget(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("empty constraint set: {0}")]
    EmptyConstraintSet(String),

    #[error("support separation violated: {0}")]
    SeparationViolated(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl CoreError {
    /// True for errors that reject the request before any computation,
    /// i.e. the validation class (CLI exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CoreError::InvalidParameter(_) | CoreError::MapValidation(_) | CoreError::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
