use thiserror::Error;

/// Errors raised by the estimators, criteria and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too many slices: H = {slices} requires n >= {needed}, got n = {n}")]
    TooManySlices { slices: usize, n: usize, needed: usize },

    #[error("dimension too small: {criterion} needs p >= {min}, got p = {p}")]
    DimensionTooSmall {
        criterion: &'static str,
        min: usize,
        p: usize,
    },

    #[error("matrix is not positive semi-definite: eigenvalue {value:e} below tolerance {tolerance:e}")]
    NotPsd { value: f64, tolerance: f64 },

    #[error("matrix is not symmetric: max asymmetry {0:e}")]
    NotSymmetric(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
