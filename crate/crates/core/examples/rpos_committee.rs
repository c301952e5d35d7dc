//! Committee election and miner choice: how often an attacker who always
//! targets the highest-stake member names the miner, under random and
//! max-stake selection.
//!
//! cargo run --release --example rpos_committee

use mecchain::reputation::{
    elect_committee, miner_hit_probability, select_miner, BaseStationProfile, MinerPolicy, ReputationConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = ReputationConfig::default();
    let profiles: Vec<BaseStationProfile> = (0..10)
        .map(|id| BaseStationProfile::with_reputation(id, cfg.history_window, if id < 5 { 0.95 } else { 0.6 }))
        .collect();
    let elected = elect_committee(&profiles, &cfg, 0).expect("stations present");
    println!(
        "threshold {:.3}, committee {:?}, highest stake {}",
        elected.threshold, elected.committee, elected.max_stake
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for policy in [MinerPolicy::RposRandom, MinerPolicy::PosMaxStake] {
        let history: Vec<_> = (0..10_000)
            .map(|_| select_miner(elected.clone(), policy, &mut rng))
            .collect();
        println!(
            "{:>5}: hit probability {:.4} (1/|committee| = {:.4})",
            policy.label(),
            miner_hit_probability(&history),
            1.0 / elected.size() as f64
        );
    }
}
