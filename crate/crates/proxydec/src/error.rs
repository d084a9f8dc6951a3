use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid logits: {0}")]
    InvalidLogits(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("session init failed for backend '{backend}': {message}")]
    SessionInit { backend: String, message: String },

    #[error("backend '{backend}' unavailable at step {step}: {message}")]
    BackendUnavailable {
        backend: String,
        step: usize,
        message: String,
    },

    #[error("decode aborted at step {step} (backend '{backend}'): {message}")]
    DecodeAborted {
        backend: String,
        step: usize,
        partial: Vec<u32>,
        message: String,
    },

    #[error("dominance bound undefined: {0}")]
    UndefinedBound(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset validation error at line {line}: {message}")]
    DatasetValidation { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
