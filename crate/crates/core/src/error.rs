use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NilError {
    #[error("shape mismatch in `{field}`: expected {expected}, found {found}")]
    Shape {
        field: &'static str,
        expected: String,
        found: String,
    },
    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("spec validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, NilError>;
