use thiserror::Error;

/// Errors raised by the samplers, the evidence computations and the oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid data: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("problem too large for exhaustive evaluation: {0}")]
    TooLarge(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("chain retained no samples")]
    EmptyChain,
}

pub type Result<T> = std::result::Result<T, Error>;
