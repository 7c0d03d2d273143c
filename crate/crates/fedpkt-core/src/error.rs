//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by parsing, partitioning, training, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A trace record could not be parsed under strict mode.
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    /// An operation that needs at least one example received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// An operation that needs both classes saw only one.
    #[error("single-class input: {0}")]
    SingleClass(String),

    /// More clients requested than examples available.
    #[error("cannot split {examples} examples across {clients} clients")]
    TooManyClients { clients: usize, examples: usize },

    /// A split specification cannot be satisfied.
    #[error("infeasible split spec: {0}")]
    InfeasibleSpec(String),

    /// An example refers to feature indices outside the model dimension.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Models or datasets built against different vocabularies were mixed.
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    /// Vocabularies of different feature modes were compared.
    #[error("vocabulary mode mismatch: {0}")]
    ModeMismatch(String),

    /// A client dataset is too small for the requested operation.
    #[error("client {client} has too few examples: {reason}")]
    ClientTooSmall { client: usize, reason: String },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    /// Training produced a non-finite weight.
    #[error("non-finite weights after update: {0}")]
    NonFiniteWeights(String),

    /// Prediction and truth vectors disagree in length.
    #[error("length mismatch: predictions {predictions} vs truths {truths}")]
    LengthMismatch { predictions: usize, truths: usize },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Underlying JSON failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
