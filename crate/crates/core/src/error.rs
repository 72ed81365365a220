use thiserror::Error;

/// A record field violated its schema.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field `{field}`: {message}")]
pub struct SchemaError {
    pub field: &'static str,
    pub message: String,
}

impl SchemaError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self { field, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("frame index {got} does not follow {previous}")]
    FrameIndex { previous: u64, got: u64 },
    #[error("timestamp {got} ms precedes {previous} ms")]
    Timestamp { previous: i64, got: i64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClipError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("sequencing error: {0}")]
    Sequencing(#[from] SequenceError),
    #[error("clip has no frames")]
    Empty,
}
