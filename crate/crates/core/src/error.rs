use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty attention score set")]
    EmptyScores,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid document: {0}")]
    InvalidDocument(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: i64, classes: usize },

    #[error("no scored items")]
    NoScoredItems,

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{msg} at offset {offset}")]
    Format { msg: String, offset: usize },

    #[error("label file: {0}")]
    Labels(String),

    #[error("non-finite loss at epoch {epoch}, document `{doc_id}`")]
    NanLoss { epoch: usize, doc_id: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(msg: impl Into<String>, offset: usize) -> Self {
        Error::Format {
            msg: msg.into(),
            offset,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
