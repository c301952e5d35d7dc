//! Long-run reputation of an honest station as a growing share of its users
//! lies in their feedback, for three priors.
//!
//! cargo run --release --example reputation_attack

use mecchain::harness::scenarios::{reputation_checks, reputation_sweep};
use mecchain::harness::ScenarioConfig;

fn main() -> mecchain::Result<()> {
    let cfg = ScenarioConfig::default();
    let points = reputation_sweep(&cfg)?;
    println!("{:>8} {:>9} {:>11}", "prior", "fraction", "reputation");
    for p in &points {
        println!("{:>8.2} {:>9.2} {:>11.4}", p.prior, p.malicious_fraction, p.reputation);
    }
    for c in reputation_checks(&cfg, &points) {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
