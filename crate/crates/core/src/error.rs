use thiserror::Error;

/// Errors produced by the filtering, training, metrics and IO layers.
#[derive(Debug, Error)]
pub enum DtError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("label {label} at pixel {index} is out of range for {classes} classes")]
    Label {
        label: usize,
        index: usize,
        classes: usize,
    },

    #[error("tape error: {0}")]
    Tape(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DtError {
    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        DtError::ShapeMismatch {
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        DtError::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DtError>;
