use thiserror::Error;

/// Errors surfaced by the SELD pipeline.
#[derive(Debug, Error)]
pub enum SeldError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported audio format: {0}")]
    UnsupportedAudio(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt file {path}: {msg}")]
    Corrupt { path: String, msg: String },
}

impl SeldError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SeldError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn corrupt(path: impl Into<String>, msg: impl Into<String>) -> Self {
        SeldError::Corrupt {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
