use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown attack label `{0}`")]
    UnknownLabel(String),
    #[error("record has {found} feature fields, expected {expected}")]
    FieldCount { found: usize, expected: usize },
    #[error("invalid numeric value `{value}` in column {column}")]
    Numeric { column: usize, value: String },
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
