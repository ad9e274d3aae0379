use thiserror::Error;

use crate::expr::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {0}")]
    Parse(ParseError),
    #[error("expected {expected} components, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite value")]
    NonFinite,
    #[error("zero vector has no supporting normals")]
    ZeroVector,
    #[error("invalid norm: {0}")]
    InvalidNorm(String),
    #[error("unsupported norm for this operation: {0}")]
    UnsupportedNorm(String),
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("state norm exceeded the overflow guard at t = {t}")]
    Diverged { t: f64 },
    #[error("eigen decomposition failed: {0}")]
    Eigen(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown system '{0}'")]
    UnknownSystem(String),
    #[error("missing parameter '{0}'")]
    MissingParameter(String),
    #[error("invalid document: {0}")]
    Document(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
