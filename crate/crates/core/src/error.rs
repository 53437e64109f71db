use thiserror::Error;

/// Errors produced anywhere in the key-rate pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration invariant does not hold. The payload names it.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("variant `{variant}` requires symmetric source parameters, but {field} differs between Alice and Bob")]
    AsymmetricParamsForSymmetricVariant { variant: String, field: &'static str },

    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),

    #[error("degenerate decoy intensities: {0}")]
    DegenerateIntensities(&'static str),

    #[error("single-photon yield bound is zero")]
    ZeroYield,

    #[error("counting rate is zero: {0}")]
    ZeroRate(&'static str),

    #[error("phase slice is empty (slice = {0})")]
    EmptySlice(f64),

    #[error("root finder did not converge: {0}")]
    NonConvergence(String),

    #[error("argument {value} outside domain of {function}")]
    DomainError { function: &'static str, value: f64 },

    #[error("repeaterless bound is infinite for a lossless channel")]
    InfiniteBound,

    /// Malformed configuration text.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
