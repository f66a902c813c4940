use std::path::PathBuf;

use thiserror::Error;

use crate::providers::ProviderKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsorted input: {0}")]
    UnsortedInput(String),

    #[error("{}: line {line}: {message}", path.display())]
    MalformedManifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: schema_version mismatch (expected {expected}, found {found})", path.display())]
    SchemaMismatch {
        path: PathBuf,
        expected: u32,
        found: serde_json::Value,
    },

    #[error("unknown pipeline stage `{0}`")]
    UnknownStage(String),

    #[error("invalid record {clip_id}: {message}")]
    InvalidRecord { clip_id: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{kind} provider unavailable: {message}")]
    ProviderUnavailable { kind: ProviderKind, message: String },

    #[error("{kind} provider protocol violation: {message}")]
    ProtocolViolation { kind: ProviderKind, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate embedding (zero norm)")]
    DegenerateEmbedding,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing input manifest: {0}")]
    MissingInput(String),

    #[error("record {0} is not scored")]
    Unscored(String),

    #[error("review service: {0}")]
    Service(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownStage(_) => 2,
            Error::ProviderUnavailable { .. } | Error::ProtocolViolation { .. } => 3,
            Error::Io { .. }
            | Error::MalformedManifest { .. }
            | Error::SchemaMismatch { .. }
            | Error::MissingInput(_)
            | Error::Service(_) => 4,
            _ => 1,
        }
    }

    pub fn is_provider_outage(&self) -> bool {
        matches!(self, Error::ProviderUnavailable { .. })
    }
}
