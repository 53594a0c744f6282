use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated an operation's precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Mismatched dimensions, bad checkpoint, unusable endpoint settings.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("entry {entry_id} not found")]
    NotFound { entry_id: u64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// An agent backend or HTTP endpoint failed after exhausting retries.
    #[error("backend failure: {0}")]
    Backend(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    /// A trace file line failed to parse.
    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short machine-readable discriminator, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::NotFound { .. } => "not_found",
            Error::Numeric(_) => "numeric",
            Error::Backend(_) => "backend",
            Error::Io(_) => "io",
            Error::Serde(_) => "serde",
            Error::Schema { .. } => "schema",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
