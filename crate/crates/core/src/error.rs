use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("token {token:?} contains characters outside [a-z0-9]")]
    InvalidToken { token: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query is empty")]
    EmptyQuery,

    #[error("document {doc_id:?} has no words")]
    EmptyDocument { doc_id: String },

    #[error("collection is empty")]
    EmptyCollection,

    #[error("duplicate doc_id {doc_id:?}")]
    DuplicateDocId { doc_id: String },

    #[error("document {doc_id:?}: line {line_index}: {reason}")]
    InvalidLine {
        doc_id: String,
        line_index: usize,
        reason: String,
    },

    #[error("document {doc_id:?}: word {word_index}: {reason}")]
    InvalidWord {
        doc_id: String,
        word_index: usize,
        reason: String,
    },

    #[error("question {question_id:?}: {reason}")]
    InvalidQuestion { question_id: String, reason: String },

    #[error("unknown document {doc_id:?}")]
    UnknownDocument { doc_id: String },

    #[error("invalid span ({start}, {end}) for {what} of length {len}")]
    InvalidSpan {
        what: &'static str,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("while processing {context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
