use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("no embedding capacity: the plan contains no eligible sites")]
    NoCapacity,

    #[error("plan does not match document: {0}")]
    PlanMismatch(String),

    #[error("vocabulary id {0} is not present in the distribution")]
    UnknownVocabId(u32),

    #[error("distribution has {0} entries, at least 2 are required")]
    DegenerateDistribution(usize),

    #[error("message of {needed} bits exceeds capacity of {capacity} bits")]
    CapacityExceeded { needed: usize, capacity: usize },

    #[error("sequence of {len} pieces exceeds maximum length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("model backend failure: {0}")]
    BackendFailure(String),

    #[error("fine-tuning did not converge after {epochs} epochs (last ESR {last_esr:.4})")]
    NonConvergence { epochs: usize, last_esr: f64 },

    #[error("plan fingerprint mismatch: artifact expects {expected}, text and key give {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("artifact corrupt: {0}")]
    ArtifactCorrupt(String),

    #[error("distributions do not share support: {0}")]
    SupportMismatch(String),

    #[error("scorer failure: {0}")]
    ScorerFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid message: {0}")]
    InvalidMessage(String),

    #[error("unsupported schema version {found} for {what} (supported major {supported})")]
    UnsupportedSchema {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
