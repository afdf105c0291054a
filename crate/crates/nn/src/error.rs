use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { context: &'static str, expected: Vec<usize>, actual: Vec<usize> },
    #[error("invalid layer configuration: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {context} (layer {layer}, index {index}: {value})")]
    NonFinite { context: &'static str, layer: usize, index: usize, value: f64 },
    #[error("weights file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
