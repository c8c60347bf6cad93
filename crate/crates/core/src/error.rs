use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A malformed line found while ingesting a JSONL or CSV input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus has no non-empty documents")]
    EmptyCorpus,

    #[error("vocabulary is empty after applying min_count = {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corrupted sampler state: {0}")]
    CorruptState(String),

    #[error("training diverged in {stage}: {detail}")]
    Diverged { stage: &'static str, detail: String },

    #[error("topic {topic} has an undefined coherence score: top word never occurs in the corpus")]
    UndefinedCoherence { topic: usize },

    #[error("history has {got} events but the model needs at least {needed}; fall back to the Markov baseline")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed input:\n{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Malformed(Vec<LineError>),

    #[error("events for user {user} are out of order at line {line}")]
    OutOfOrder { user: String, line: usize },

    #[error("unsupported format tag {found:?}, expected {expected:?}")]
    Format { expected: String, found: String },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_path(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Path {
            path: path.into(),
            source,
        }
    }
}
