//! Trains under one cost bound, saves a checkpoint, then moves to a new
//! bound both from the checkpoint and from scratch.
//!
//! cargo run --release --example transfer_learning

use mecchain::drl::{save_checkpoint, RunMeta};
use mecchain::harness::scenarios::{initial_agent, train_agent};
use mecchain::harness::ScenarioConfig;

fn main() -> mecchain::Result<()> {
    let dir = std::env::temp_dir().join("mecchain-transfer");
    std::fs::create_dir_all(&dir).map_err(|source| mecchain::Error::Io {
        path: dir.clone(),
        source,
    })?;
    let mut base = ScenarioConfig::default();
    base.training.episodes = 15;
    base.training.episode_eval_slots = 500;
    let first = train_agent(&base, initial_agent(&base)?, None)?;
    let path = dir.join("checkpoint.json");
    let meta = RunMeta {
        seed: base.seed,
        episodes: base.training.episodes,
    };
    save_checkpoint(&first.agent, meta, &path)?;

    let mut next = base.clone();
    next.agent.e_max = 1.0;
    next.seed += 100;
    next.training.episodes = 10;
    let cold = train_agent(&next, initial_agent(&next)?, None)?;
    next.training.warm_start = Some(path);
    let warm = train_agent(&next, initial_agent(&next)?, None)?;
    for (name, o) in [("cold", &cold), ("warm", &warm)] {
        let settled = o.report.episodes_to_satisfy(next.agent.e_max * 1.1, 3);
        println!(
            "{name}: settled after {settled:?} episodes, cost {:.4}, latency {:.3}",
            o.evaluation.discounted_cost, o.evaluation.mean_latency
        );
    }
    Ok(())
}
