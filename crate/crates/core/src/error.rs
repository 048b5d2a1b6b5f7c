use alloc::string::String;

/// Errors raised by the fitting, prediction and oracle routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LgrError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix not positive definite ({context}); estimated condition number {condition:e}")]
    NotPositiveDefinite { context: String, condition: f64 },
    #[error("model has no local models; fit it before predicting")]
    EmptyModel,
    #[error("nMSE undefined: target variance is zero")]
    ZeroVariance,
    #[error("dataset is empty")]
    EmptyDataset,
}

pub type Result<T, E = LgrError> = core::result::Result<T, E>;
