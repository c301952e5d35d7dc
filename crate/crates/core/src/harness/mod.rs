//! Configuration, experiment orchestration and run artifacts.

pub mod artifact;
pub mod config;
pub mod scenarios;
pub mod stats;

pub use artifact::{sha256_hex, Check, Manifest, RunDir, MANIFEST_FILE};
pub use config::{Preset, ScenarioConfig};
pub use scenarios::{
    replay, run_consensus_comparison, run_reputation_sweep, run_training, run_tradeoff_sweep, run_verb,
    run_verify_ledger,
};
