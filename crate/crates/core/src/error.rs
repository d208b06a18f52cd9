use thiserror::Error;

/// Unified error type for the whole toolkit.
///
/// Variants are grouped by failure class so the command-line layer can map
/// them onto stable process exit codes: configuration and usage problems,
/// data ingest problems, and numerical or set-emptiness problems.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector with zero or non-finite norm cannot be normalized.
    #[error("cannot normalize vector with norm {norm} ({context})")]
    Normalization { norm: f64, context: String },

    /// An operation required a nonempty set and got an empty one.
    #[error("empty set: {0}")]
    EmptySet(String),

    /// Two records carry the same identifier.
    #[error("duplicate record for id `{0}`")]
    DuplicateRecord(String),

    /// A requested sample cannot be drawn from the available pool.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// A matrix does not have the rank an operation requires.
    #[error("rank error: {0}")]
    Rank(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    /// Paired inputs (e.g. prompted/plain question states) do not line up.
    #[error("pairing error: {0}")]
    Pairing(String),

    /// Cross-validation folds cannot be formed as requested.
    #[error("fold error: {0}")]
    Fold(String),

    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Structured text could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// An input file is malformed or inconsistent with its companions.
    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error class.
    ///
    /// 2 usage/config, 3 ingest/validation, 4 numerical/degenerate data,
    /// 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Ingest(_) | Error::Parse(_) | Error::DuplicateRecord(_) | Error::Pairing(_) => {
                3
            }
            Error::Normalization { .. }
            | Error::EmptySet(_)
            | Error::Rank(_)
            | Error::Dimension { .. }
            | Error::Sampling(_)
            | Error::Fold(_) => 4,
            Error::Io(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
