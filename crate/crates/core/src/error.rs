use std::path::PathBuf;

use thiserror::Error;

/// Invalid configuration values, raised before any simulation starts.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// Errors from reputation evaluation and committee election.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReputationError {
    #[error("no-feedback: DoS inference needs at least one feedback entry")]
    NoFeedback,
    #[error("empty-committee: threshold {threshold} exceeds every reputation")]
    EmptyCommittee { threshold: f64 },
    #[error("no base stations to elect from")]
    NoBaseStations,
    #[error("base station {0} has no reputation history")]
    EmptyHistory(usize),
}

/// Errors from the block store and the consensus cost model.
#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("zero-rate: committee service rate must be positive")]
    ZeroRate,
    #[error("block size {block_size} is smaller than the header size {header_size}")]
    BlockTooSmall { block_size: f64, header_size: f64 },
    #[error("malformed ledger dump at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("ledger i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors from the learning agent, its checkpoints and training loop.
#[derive(Debug, Error)]
pub enum DrlError {
    #[error("non-finite {what} (episode {episode}, step {step})")]
    NonFinite {
        what: String,
        episode: usize,
        step: usize,
    },
    #[error("training diverged at episode {episode}; checkpoint dumped to {dump:?}")]
    Diverged {
        episode: usize,
        dump: Option<PathBuf>,
    },
    #[error("mini-batch of {requested} exceeds the {available} stored transitions")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("checkpoint {path:?}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("network shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Top-level error for scenario orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Reputation(#[from] ReputationError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Drl(#[from] DrlError),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o on {path:?}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest replay mismatch: {0}")]
    Replay(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
