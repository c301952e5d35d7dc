//! Library-level properties across modules.

use mecchain::env::discounted_cost_oracle;
use mecchain::harness::ScenarioConfig;
use mecchain::ledger::Ledger;
use mecchain::network::{ControlEnv, MecNetwork};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_action_sequence_conserves_capacity(seed in 0u64..1000, us in prop::collection::vec(0.0f64..=1.0, 1..300)) {
        let cfg = ScenarioConfig::default().network_config();
        let mut net = MecNetwork::new(cfg, seed).unwrap();
        net.reset(seed);
        for u in us {
            let o = net.step(u).unwrap();
            prop_assert!(net.capacity_conserved());
            prop_assert!(o.reward <= 0.0 && o.reward >= -1.0);
            prop_assert_eq!(o.cost == 1, o.action == 0);
        }
    }

    #[test]
    fn every_block_of_a_simulated_chain_checks_out(seed in 0u64..1000, slots in 1usize..80) {
        let mut cfg = ScenarioConfig::default().network_config();
        cfg.keep_ledger = true;
        let mut net = MecNetwork::new(cfg, seed).unwrap();
        net.reset(seed);
        for _ in 0..slots {
            net.step(1.0).unwrap();
        }
        let ledger = net.ledger();
        prop_assert_eq!(ledger.len(), slots + 1);
        prop_assert!(ledger.verify_chain().is_ok());
        let mut dump = Vec::new();
        ledger.export_ndjson(&mut dump).unwrap();
        let back = Ledger::import_ndjson(dump.as_slice()).unwrap();
        prop_assert_eq!(back.blocks(), ledger.blocks());
    }
}

#[test]
fn always_denying_costs_the_geometric_sum() {
    let gamma = 0.95;
    let costs = vec![1u8; 2000];
    approx::assert_relative_eq!(discounted_cost_oracle(&costs, gamma), 1.0 / (1.0 - gamma), max_relative = 1e-9);
}

#[test]
fn paper_preset_is_consistent() {
    let cfg = ScenarioConfig::from_toml_str("preset = \"paper\"\n").unwrap();
    cfg.validate().unwrap();
    let net = cfg.network_config();
    net.validate().unwrap();
    assert!(net.env.capacity > ScenarioConfig::default().network_config().env.capacity);
}
