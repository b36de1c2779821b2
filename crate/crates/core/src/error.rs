use thiserror::Error;

/// Errors raised by knockoff construction, sampling and verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("invalid density value {value} at point {point:?}")]
    InvalidDensity { value: f64, point: Vec<f64> },

    #[error("invalid test function `{0}`: not invariant under every swap")]
    InvalidTestFunction(String),

    #[error("joint covariance is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("numeric integrity violated: {0}")]
    NumericIntegrity(String),

    #[error("point on the boundary of the marginal support: {0}")]
    Boundary(String),

    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("degenerate conditioning: {0}")]
    DegenerateConditioning(String),

    #[error("degenerate point: {0}")]
    DegeneratePoint(String),

    #[error("degenerate column {0}: zero variance")]
    DegenerateColumn(usize),

    #[error("family registration failed: {0}")]
    Registration(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
