//! Consensus cost against traffic: block size, miner cycles, round latency
//! and the time an attacker needs to rewrite the chain.
//!
//! cargo run --release --example consensus_costs

use mecchain::harness::scenarios::{consensus_checks, consensus_points, miner_hits};
use mecchain::harness::ScenarioConfig;

fn main() -> mecchain::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.consensus_compare.n_slots = 2000;
    let points = consensus_points(&cfg)?;
    println!(
        "{:>8} {:>11} {:>14} {:>10} {:>8}",
        "lambda", "block bytes", "miner cycles", "tau_bc", "tamper"
    );
    for p in &points {
        println!(
            "{:>8.0} {:>11.1} {:>14.4e} {:>10.4} {:>8.3}",
            p.mean_requests, p.mean_block_size, p.miner_cycles, p.mean_tau_bc, p.tamper_time
        );
    }
    let hits = miner_hits(&cfg)?;
    for h in &hits {
        println!("{}: hit probability {:.4}", h.policy, h.hit_probability);
    }
    for c in consensus_checks(&cfg, &points, &hits) {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
