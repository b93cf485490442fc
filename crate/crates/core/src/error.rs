use alloc::string::String;

/// Errors raised by the embedding core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: expected {expected} components, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{kind} id {id} out of range (size {size})")]
    Lookup {
        kind: &'static str,
        id: usize,
        size: usize,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
