//! Latency against the cost bound, each bound warm-started from the last,
//! next to fixed-weight, unbounded and latency-only baselines. Slow: run
//! with --release.
//!
//! cargo run --release --example tradeoff_sweep [out-dir]

use std::path::PathBuf;

use mecchain::harness::scenarios::{tradeoff_checks, tradeoff_sweep};
use mecchain::harness::{RunDir, ScenarioConfig};

fn main() -> mecchain::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mecchain-tradeoff"));
    let cfg = ScenarioConfig::default();
    let mut run = RunDir::create(&out)?;
    let points = tradeoff_sweep(&cfg, &mut run)?;
    println!("{:>12} {:>6} {:>10} {:>10} {:>8}", "point", "E_max", "cost", "latency", "lambda");
    for p in &points {
        println!(
            "{:>12} {:>6} {:>10.4} {:>10.3} {:>8.3}",
            p.label, p.e_max, p.discounted_cost, p.mean_latency, p.lambda_l
        );
    }
    for c in tradeoff_checks(&cfg, &points) {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
