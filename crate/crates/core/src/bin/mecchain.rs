//! Command-line front end: one verb per experiment family.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mecchain::harness::{replay, run_verb, Manifest, ScenarioConfig};

#[derive(Parser)]
#[command(version, about = "Blockchain-secured edge computing simulator")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML scenario file; the desk preset when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; `runs/<verb>` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Steady-state reputation against the share of lying users.
    ReputationSweep(Common),
    /// Consensus cycles, tamper time and miner predictability.
    ConsensusCompare(Common),
    /// Trains one agent and evaluates it.
    Train(Common),
    /// Latency against the DoS bound, with warm-started points.
    Tradeoff(Common),
    /// Checks the hash chain of a ledger dump, or of a simulated one.
    VerifyLedger {
        /// NDJSON dump to check.
        dump: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Reruns a manifest and compares every output digest.
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn config(c: &Common) -> mecchain::Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, verb: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(verb))
}

fn run(cli: Cli) -> mecchain::Result<Manifest> {
    let (name, common, input) = match &cli.verb {
        Verb::ReputationSweep(c) => ("reputation-sweep", c, None),
        Verb::ConsensusCompare(c) => ("consensus-compare", c, None),
        Verb::Train(c) => ("train", c, None),
        Verb::Tradeoff(c) => ("tradeoff", c, None),
        Verb::VerifyLedger { dump, common } => ("verify-ledger", common, dump.as_deref()),
        Verb::Replay { manifest, common } => {
            // The manifest carries the config and seed.
            return replay(manifest, &out_dir(common, "replay"));
        }
    };
    run_verb(name, &config(common)?, input, &out_dir(common, name))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Ok(m) => {
            for c in &m.checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if m.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
