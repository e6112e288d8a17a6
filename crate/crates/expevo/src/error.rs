use std::path::PathBuf;

/// Errors surfaced by the library.
///
/// Variants are grouped by failure class so a caller (notably the CLI) can
/// map them onto distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller passed a value outside an operation's documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mathematical domain violation (e.g. log-normal density at x <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vocabulary construction removed every term.
    #[error("vocabulary is empty after applying min_df; corpus is unusable")]
    EmptyVocabulary,

    /// A malformed input record, with its 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Checkpoint magic/version does not match what this build writes.
    #[error("version mismatch in {path}: expected {expected}, found {found}")]
    VersionMismatch {
        path: String,
        expected: String,
        found: String,
    },

    /// A checkpoint refers to a corpus with different dimensions or content.
    #[error("model/corpus mismatch: {0}")]
    Incompatible(String),

    /// A training phase produced a non-finite parameter.
    #[error("non-finite value during phase `{phase}`: {detail}")]
    NonFinite { phase: String, detail: String },

    /// The normal equations are singular (e.g. all-zero features with no
    /// ridge penalty).
    #[error("singular system: {0}")]
    Singular(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    /// An internal invariant was violated; indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
