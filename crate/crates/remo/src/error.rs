//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Network or HTTP failure after exhausting retries.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },

    /// The backend answered but the body was not what the protocol promises.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Embedding input was empty or blank after trimming.
    #[error("empty input: embedding requires non-empty text")]
    EmptyInput,

    #[error("storage error at {path:?}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Snapshot file failed its digest or structure check.
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    /// Embedding could not be computed for a notebook operation.
    #[error("embedding failure: {0}")]
    EmbeddingFailure(String),

    #[error("unknown record id {0}")]
    UnknownId(u64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// The gradient model returned an empty critique; the caller skips the
    /// prompt update for this round.
    #[error("gradient model returned an empty critique")]
    GradientEmpty,

    /// Internal assertion: the epoch's call sequence violated the stage order.
    #[error("stage order violation: {0}")]
    StageOrder(String),

    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 0 success, 2 config, 3 data, 4 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Precondition(_) => 2,
            Error::Storage { .. }
            | Error::CorruptSnapshot(_)
            | Error::Parse { .. }
            | Error::DuplicateId(_)
            | Error::NotFound(_)
            | Error::UnknownId(_) => 3,
            Error::Transport { .. }
            | Error::Protocol(_)
            | Error::EmbeddingFailure(_)
            | Error::EmptyInput => 4,
            Error::GradientEmpty | Error::StageOrder(_) => 1,
        }
    }
}
