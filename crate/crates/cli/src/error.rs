use std::fmt;
use std::path::Path;

use scholar_intent::Error as CoreError;
use serde::Serialize;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Failure,
    InvalidConfig,
    MissingInput,
    Schema,
    Diverged,
    OutputExists,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Failure => 1,
            Kind::InvalidConfig => 2,
            Kind::MissingInput => 3,
            Kind::Schema => 4,
            Kind::Diverged => 5,
            Kind::OutputExists => 6,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn missing(path: &Path) -> Self {
        Self::new(Kind::MissingInput, format!("input not found: {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Path { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Kind::MissingInput,
            CoreError::InvalidConfig(_) | CoreError::EmptyVocabulary { .. } => Kind::InvalidConfig,
            CoreError::Malformed(_)
            | CoreError::Format { .. }
            | CoreError::Shape(_)
            | CoreError::OutOfOrder { .. }
            | CoreError::Json(_)
            | CoreError::Csv(_)
            | CoreError::EmptyCorpus => Kind::Schema,
            CoreError::Diverged { .. } => Kind::Diverged,
            _ => Kind::Failure,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Kind::Failure, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(Kind::Schema, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(Kind::Schema, e.to_string())
    }
}
