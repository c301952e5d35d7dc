//! Builds a hash-chained ledger, flips one byte in a block body and shows
//! that verification pinpoints the altered block.
//!
//! cargo run --release --example ledger_tamper

use mecchain::harness::scenarios::simulate_ledger;
use mecchain::harness::ScenarioConfig;
use mecchain::ledger::{tamper_time, Ledger};

fn main() -> mecchain::Result<()> {
    let cfg = ScenarioConfig {
        n_slots: 50,
        ..Default::default()
    };
    let mut ledger = simulate_ledger(&cfg)?;
    println!("{} blocks, tip {}", ledger.len(), hex::encode(ledger.tip().hash));
    println!("intact: {:?}", ledger.verify_chain());

    let mut dump = Vec::new();
    ledger.export_ndjson(&mut dump)?;
    let back = Ledger::import_ndjson(dump.as_slice())?;
    println!("NDJSON round trip equal: {}", back.blocks() == ledger.blocks());

    let target = ledger
        .blocks()
        .iter()
        .position(|b| !b.body.is_empty())
        .expect("some slot has requests");
    ledger.blocks_mut()[target].body[0] ^= 0x01;
    println!("after flipping a byte of block {target}: {:?}", ledger.verify_chain());

    println!(
        "slots to rewrite half of 10 replicas at 3 slots per round: {}",
        tamper_time(10, 3.0)
    );
    Ok(())
}
