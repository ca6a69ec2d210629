use std::path::PathBuf;

/// Errors produced across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible operands: {0}")]
    IncompatibleOperands(String),

    #[error("undefined direction: cosine distance of a zero vector")]
    UndefinedDirection,

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported schema version {found} (supported: {supported})")]
    UnsupportedSchema { found: u32, supported: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line} (question {question_id}): {message}")]
    Validation {
        line: usize,
        question_id: String,
        message: String,
    },

    #[error("fingerprint mismatch: cache holds `{cached}`, query requires `{requested}`")]
    FingerprintMismatch { cached: String, requested: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
