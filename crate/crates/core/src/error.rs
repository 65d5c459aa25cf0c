use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KatoError {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("mode mismatch: expected {expected}, got {actual}")]
    ModeMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),

    #[error("Lyapunov system is ill-conditioned (separation estimate {separation:e})")]
    IllConditioned { separation: f64 },

    #[error("input must lie in the positive cone (most negative component {min:e})")]
    NotPositive { min: f64 },

    #[error("dissipativity violated: worst sample value {worst:e} exceeds tolerance {tol:e}")]
    Dissipativity { worst: f64, tol: f64 },

    #[error("assembly size {size} exceeds cap {cap}")]
    SizeExceeded { size: usize, cap: usize },

    #[error("negative rate {value} at k = {index}")]
    NegativeRate { index: usize, value: f64 },

    #[error("rate expression error: {0}")]
    Expression(String),

    #[error("degenerate construction: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, KatoError>;
