//! Trains the primal-dual agent under a cost bound and prints the learning
//! curve with the multiplier.
//!
//! cargo run --release --example train_constrained [episodes]

use mecchain::harness::scenarios::{initial_agent, train_agent, training_checks};
use mecchain::harness::ScenarioConfig;

fn main() -> mecchain::Result<()> {
    let mut cfg = ScenarioConfig::default();
    if let Some(episodes) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.training.episodes = episodes;
    }
    let o = train_agent(&cfg, initial_agent(&cfg)?, None)?;
    println!("{:>4} {:>10} {:>10} {:>9}", "ep", "reward", "disc.cost", "lambda");
    for l in &o.report.log {
        println!(
            "{:>4} {:>10.4} {:>10.4} {:>9.4}",
            l.episode, l.mean_reward, l.discounted_cost, l.lambda_l
        );
    }
    println!(
        "greedy: cost {:.4} (E_max {:.3}), latency {:.3} slots",
        o.evaluation.discounted_cost, cfg.agent.e_max, o.evaluation.mean_latency
    );
    for c in training_checks(&cfg, &o) {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
