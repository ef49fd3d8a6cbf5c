use std::path::PathBuf;

/// Errors produced anywhere in the scoring, analysis and training pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("zero usable samples")]
    EmptyCorpus,

    #[error("no vectors")]
    NoVectors,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("sample {0} missing from confidence file")]
    MissingConfidence(usize),

    #[error("learner process exited while request {seq} was pending ({status})")]
    LearnerExited { seq: u64, status: String },

    #[error("malformed learner reply to request {seq}: {message}")]
    MalformedReply { seq: u64, message: String },

    #[error("learner timed out on request {seq}")]
    LearnerTimeout { seq: u64 },

    #[error("learner reported error for request {seq}: {message}")]
    LearnerFailure { seq: u64, message: String },

    #[error("training step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Process exit code for this error class. Every class maps to a distinct code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 10,
            Error::Parse { .. } => 11,
            Error::EmptyCorpus => 12,
            Error::NoVectors => 13,
            Error::DimensionMismatch { .. } => 14,
            Error::InvalidInput(_) => 15,
            Error::UnknownWord(_) => 16,
            Error::MissingConfidence(_) => 17,
            Error::LearnerExited { .. } => 18,
            Error::MalformedReply { .. } => 19,
            Error::LearnerTimeout { .. } => 20,
            Error::LearnerFailure { .. } => 21,
            Error::AtStep { source, .. } => source.exit_code(),
            Error::Config(_) => 22,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
