use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("softmax vector needs at least 2 entries, got {0}")]
    TooFewClasses(usize),

    #[error("expected a vector of length {expected}, got {got}")]
    WrongLength { expected: usize, got: usize },

    #[error("probability entry {index} is {value}, outside [0, 1]")]
    EntryOutOfRange { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, which is more than 1e-6 away from 1")]
    NotNormalized { sum: f64 },

    #[error("quantization level must be >= 2, got {0}")]
    InvalidLevel(u64),

    #[error("flat cell index not representable for q={q}, m={m}; use the BinKey directly")]
    IndexNotRepresentable { q: u64, m: usize },

    #[error("label {label} outside [1, {n}]")]
    LabelOutOfRange { label: usize, n: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("dataset shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("quantization level mismatch: expected {expected}, got {got}")]
    LevelMismatch { expected: u64, got: u64 },

    #[error("insufficient validation data: search range [{q_min}, {q_max}] is empty")]
    InsufficientValidationData { q_min: u64, q_max: u64 },

    #[error("no sources above threshold {0}")]
    NoSurvivors(f64),

    #[error("missing ground truth for source `{0}`")]
    MissingTruth(String),

    #[error("{0} correlation undefined for constant input")]
    UndefinedCorrelation(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::NoSurvivors(_) => 5,
            Error::InsufficientValidationData { .. } => 6,
            Error::MissingTruth(_) => 7,
            Error::Config(_) => 8,
            _ => 1,
        }
    }
}
