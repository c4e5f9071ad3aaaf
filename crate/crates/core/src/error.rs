//! Error type shared across the crate.
//!
//! Contract violations (bad inputs, schema problems, degenerate math) and
//! I/O failures are kept distinct so the CLI can map them to exit codes
//! 1 and 2 respectively.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("no annotations")]
    NoAnnotations,

    #[error("annotation index {index} out of range for {classes} classes")]
    AnnotationOutOfRange { index: usize, classes: usize },

    #[error("invalid probability vector: {0}")]
    InvalidDist(String),

    #[error("degenerate posterior for item {0}")]
    DegeneratePosterior(String),

    #[error("diverged at epoch {0}")]
    Diverged(usize),

    #[error("diverged at step {0}")]
    DivergedStep(usize),

    #[error("missing raw_annotations for item {0}")]
    MissingAnnotations(String),

    #[error("unknown MI code '{0}'")]
    UnknownMiCode(String),

    #[error("invalid consensus scale {0} (expected 1..=5)")]
    InvalidScale(i64),

    #[error("unknown token '{0}' in prefix")]
    UnknownToken(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("unknown config key '{0}'")]
    UnknownConfigKey(String),

    #[error("invalid value for '{key}': {message}")]
    InvalidConfigValue { key: String, message: String },

    #[error("missing ids in truth file: {0}")]
    MissingTruthIds(String),

    #[error("bad model file: {0}")]
    BadModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI should use for this error: 2 for I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn schema(line: usize, message: impl Into<String>) -> Error {
        Error::Schema {
            line,
            message: message.into(),
        }
    }
}
