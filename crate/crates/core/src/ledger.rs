//! Hash-chained block store and the analytic cost model of the consensus
//! round (CPU cycles, three-phase latency, tamper time).
//!
//! Block hash input, in order: `index` as 8-byte little endian, the 32-byte
//! `prev_hash`, then the raw body bytes. The body holds one 8-byte record per
//! request: request id and payload size, both `u32` little endian.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::LedgerError;
use crate::workload::SlotDemand;

pub type Digest = [u8; 32];

/// Name of the digest used for block hashes, recorded in run manifests.
pub const HASH_ALGORITHM: &str = "sha256";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    #[serde(with = "hex_digest")]
    pub prev_hash: Digest,
    #[serde(with = "hex_bytes")]
    pub body: Vec<u8>,
    /// Header bytes in the cost model.
    pub header_size: f64,
    /// Body bytes in the cost model (`ell_c` per request).
    pub body_size: f64,
    #[serde(with = "hex_digest")]
    pub hash: Digest,
}

impl Block {
    pub fn compute_hash(index: u64, prev_hash: &Digest, body: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update(index.to_le_bytes());
        h.update(prev_hash);
        h.update(body);
        h.finalize().into()
    }

    pub fn is_self_consistent(&self) -> bool {
        Self::compute_hash(self.index, &self.prev_hash, &self.body) == self.hash
    }

    pub fn size(&self) -> f64 {
        self.header_size + self.body_size
    }

    pub fn num_records(&self) -> usize {
        self.body.len() / 8
    }

    /// Decoded `(request id, payload size)` records.
    pub fn records(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.body.chunks_exact(8).map(|c| {
            (
                u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                u32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
    }
}

/// Where `verify_chain` found the first broken link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Stored hash does not match the recomputed digest.
    Hash,
    /// `prev_hash` does not equal the previous block's hash.
    Link,
    /// `index` does not equal the block's position.
    Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainViolation {
    pub index: usize,
    pub kind: Violation,
}

/// Append-only chain of blocks, one per slot, starting from a genesis block.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    blocks: Vec<Block>,
    header_size: f64,
    record_size: f64,
    next_request_id: u32,
}

impl Ledger {
    pub fn new(header_size: f64, record_size: f64) -> Self {
        let genesis = Block {
            index: 0,
            prev_hash: [0; 32],
            body: Vec::new(),
            header_size,
            body_size: 0.0,
            hash: Block::compute_hash(0, &[0; 32], &[]),
        };
        Self {
            blocks: vec![genesis],
            header_size,
            record_size,
            next_request_id: 0,
        }
    }

    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        let header_size = blocks.first().map_or(0.0, |b| b.header_size);
        let record_size = blocks
            .iter()
            .find(|b| b.num_records() > 0)
            .map_or(0.0, |b| b.body_size / b.num_records() as f64);
        Self {
            blocks,
            header_size,
            record_size,
            next_request_id: 0,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Direct access for tamper experiments; any change should be caught by
    /// [`Ledger::verify_chain`].
    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("ledger always holds the genesis block")
    }

    /// Packages the slot's requests into a new block chained to the tip.
    pub fn append_block(&mut self, demand: &SlotDemand) -> &Block {
        let mut body = Vec::with_capacity(demand.request_sizes.len() * 8);
        for &size in &demand.request_sizes {
            body.extend_from_slice(&self.next_request_id.to_le_bytes());
            body.extend_from_slice(&size.to_le_bytes());
            self.next_request_id = self.next_request_id.wrapping_add(1);
        }
        let index = self.blocks.len() as u64;
        let prev_hash = self.tip().hash;
        let block = Block {
            index,
            prev_hash,
            hash: Block::compute_hash(index, &prev_hash, &body),
            body,
            header_size: self.header_size,
            body_size: self.record_size * demand.request_sizes.len() as f64,
        };
        self.blocks.push(block);
        self.tip()
    }

    /// Checks every hash and link; reports the first offending block.
    pub fn verify_chain(&self) -> Result<(), ChainViolation> {
        verify_blocks(&self.blocks)
    }

    /// Writes one JSON object per block.
    pub fn export_ndjson<W: Write>(&self, mut out: W) -> Result<(), LedgerError> {
        for b in &self.blocks {
            serde_json::to_writer(&mut out, b).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a dump written by [`Ledger::export_ndjson`] without verifying it.
    pub fn import_ndjson<R: BufRead>(input: R) -> Result<Self, LedgerError> {
        let mut blocks = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let block: Block = serde_json::from_str(&line).map_err(|e| LedgerError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })?;
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(LedgerError::Malformed {
                line: 0,
                reason: "dump holds no blocks".into(),
            });
        }
        Ok(Self::from_blocks(blocks))
    }
}

pub fn verify_blocks(blocks: &[Block]) -> Result<(), ChainViolation> {
    for (i, b) in blocks.iter().enumerate() {
        let fail = |kind| Err(ChainViolation { index: i, kind });
        if b.index != i as u64 {
            return fail(Violation::Index);
        }
        if !b.is_self_consistent() {
            return fail(Violation::Hash);
        }
        if i > 0 && b.prev_hash != blocks[i - 1].hash {
            return fail(Violation::Link);
        }
    }
    Ok(())
}

/// Parameters of the consensus cost model shared by every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusParams {
    /// CPU cycles per block byte for one signature.
    pub kappa_bc: f64,
    /// Inter-station link rate in bits per second (`inf` disables transfer time).
    pub link_rate_bps: f64,
    /// Slot length in seconds.
    pub slot_duration: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            kappa_bc: 1e6,
            link_rate_bps: 10e9,
            slot_duration: 1e-3,
        }
    }
}

/// Cycles and per-phase latency (in slots) of one consensus round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCost {
    /// Miner's own signature (pre-prepare).
    pub f_bc_g: f64,
    /// Miner's pass over the validators' signatures (commit).
    pub f_bc_c: f64,
    /// One validator's signature check (prepare).
    pub f_bc_v: f64,
    pub tau_g: f64,
    pub tau_v: f64,
    pub tau_c: f64,
    pub tau_bc: f64,
}

impl ConsensusCost {
    pub fn miner_cycles(&self) -> f64 {
        self.f_bc_g + self.f_bc_c
    }
}

/// CPU cycles the miner spends on one block; zero for non-miners.
pub fn miner_cycles(block_size: f64, n_validators: usize, kappa_bc: f64, is_miner: bool) -> f64 {
    if is_miner {
        kappa_bc * block_size * (1.0 + n_validators as f64)
    } else {
        0.0
    }
}

/// Time to push one block over one link, in slots.
pub fn transmission_slots(block_size: f64, params: &ConsensusParams) -> f64 {
    block_size * 8.0 / (params.link_rate_bps * params.slot_duration)
}

/// Three-phase latency of a round in which the miner serves at `miner_rate`
/// and validator `j` at `validator_rates[j]` (CPU cycles per slot).
pub fn consensus_latency(
    params: &ConsensusParams,
    block_size: f64,
    miner_rate: f64,
    validator_rates: &[f64],
) -> Result<ConsensusCost, LedgerError> {
    let usable = |r: f64| r > 0.0;
    if !usable(miner_rate) || !validator_rates.iter().copied().all(usable) {
        return Err(LedgerError::ZeroRate);
    }
    let signature = params.kappa_bc * block_size;
    let n_v = validator_rates.len() as f64;
    let f_bc_g = signature;
    let f_bc_c = signature * n_v;
    let f_bc_v = signature;
    let hop = transmission_slots(block_size, params);

    let slowest_validator = validator_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let slowest_member = slowest_validator.min(miner_rate);

    let tau_g = f_bc_g / miner_rate + hop;
    let tau_v = if validator_rates.is_empty() {
        hop
    } else {
        f_bc_v / slowest_validator + hop
    };
    let tau_c = f_bc_c / slowest_member + hop;
    Ok(ConsensusCost {
        f_bc_g,
        f_bc_c,
        f_bc_v,
        tau_g,
        tau_v,
        tau_c,
        tau_bc: tau_g + tau_v + tau_c,
    })
}

/// Latency when every committee member serves at the same `rate`.
pub fn uniform_consensus_latency(
    params: &ConsensusParams,
    block_size: f64,
    rate: f64,
    n_validators: usize,
) -> Result<ConsensusCost, LedgerError> {
    consensus_latency(params, block_size, rate, &vec![rate; n_validators])
}

/// Slots needed to rewrite the replicas held by half the network.
pub fn tamper_time(n_bs: usize, mean_tau_bc: f64) -> f64 {
    n_bs as f64 / 2.0 * mean_tau_bc
}

mod hex_digest {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(D::Error::custom)?;
        Ok(out)
    }
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn demand(sizes: &[u32]) -> SlotDemand {
        SlotDemand::from_sizes(&WorkloadConfig::desk(), 0, sizes.to_vec())
    }

    fn chain(n: usize) -> Ledger {
        let mut l = Ledger::new(80.0, 8.0);
        for i in 0..n {
            l.append_block(&demand(&[1000 + i as u32, 2000, 3000]));
        }
        l
    }

    #[test]
    fn empty_demand_yields_header_only_block() {
        let mut l = Ledger::new(80.0, 8.0);
        let b = l.append_block(&demand(&[]));
        assert_eq!(b.body_size, 0.0);
        assert!(b.body.is_empty());
        assert_eq!(b.size(), 80.0);
    }

    #[test]
    fn blocks_link_to_predecessor() {
        let l = chain(2);
        assert_eq!(l.blocks()[2].prev_hash, l.blocks()[1].hash);
        assert_eq!(l.blocks()[1].prev_hash, l.blocks()[0].hash);
        assert_eq!(l.verify_chain(), Ok(()));
        let records: Vec<_> = l.blocks()[2].records().collect();
        assert_eq!(records, vec![(3, 1001), (4, 2000), (5, 3000)]);
        assert_eq!(l.blocks()[2].body_size, 24.0);
    }

    #[test]
    fn body_mutation_is_located() {
        let mut l = chain(10);
        l.blocks_mut()[3].body[5] ^= 0x10;
        assert_eq!(l.verify_chain().unwrap_err().index, 3);
    }

    #[test]
    fn relinked_block_is_located() {
        let mut l = chain(10);
        l.blocks_mut()[5].prev_hash = l.blocks()[2].hash;
        let v = l.verify_chain().unwrap_err();
        assert_eq!(v.index, 5);
        assert_eq!(v.kind, Violation::Hash);
    }

    #[test]
    fn rehashed_forgery_breaks_the_next_link() {
        let mut l = chain(6);
        let b = &mut l.blocks_mut()[2];
        b.body[0] ^= 1;
        b.hash = Block::compute_hash(b.index, &b.prev_hash, &b.body);
        assert_eq!(
            l.verify_chain(),
            Err(ChainViolation {
                index: 3,
                kind: Violation::Link
            })
        );
    }

    #[test]
    fn ndjson_round_trip() {
        let l = chain(4);
        let mut buf = Vec::new();
        l.export_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().next().unwrap().contains(&hex::encode(l.blocks()[0].hash)));
        let back = Ledger::import_ndjson(buf.as_slice()).unwrap();
        assert_eq!(back.blocks(), l.blocks());
        assert_eq!(back.verify_chain(), Ok(()));
    }

    #[test]
    fn malformed_dump_reports_line() {
        let l = chain(2);
        let mut buf = Vec::new();
        l.export_ndjson(&mut buf).unwrap();
        buf.extend_from_slice(b"{\"index\": 3}\n");
        match Ledger::import_ndjson(buf.as_slice()) {
            Err(LedgerError::Malformed { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Ledger::import_ndjson(&b""[..]).is_err());
    }

    #[test]
    fn miner_cycle_examples() {
        assert_eq!(miner_cycles(1000.0, 4, 1e6, false), 0.0);
        assert_eq!(miner_cycles(1000.0, 4, 1e6, true), 5e9);
        assert_eq!(miner_cycles(1000.0, 0, 1e6, true), 1e9);
    }

    #[test]
    fn uniform_rate_collapses_to_cycle_ratios() {
        let params = ConsensusParams {
            kappa_bc: 1e3,
            link_rate_bps: f64::INFINITY,
            slot_duration: 1e-3,
        };
        let block = 500.0;
        let rate = params.kappa_bc * block;
        let c = uniform_consensus_latency(&params, block, rate, 4).unwrap();
        assert_eq!((c.tau_g, c.tau_v, c.tau_c), (1.0, 1.0, 4.0));
        assert_eq!(c.tau_bc, 6.0);
        assert_eq!(c.miner_cycles(), miner_cycles(block, 4, params.kappa_bc, true));
    }

    #[test]
    fn transmission_term_unit_conversion() {
        let params = ConsensusParams::default();
        assert_relative_eq!(transmission_slots(8080.0, &params), 0.006464, max_relative = 1e-12);
    }

    #[test]
    fn no_validators_leaves_transfer_only_prepare() {
        let params = ConsensusParams::default();
        let c = uniform_consensus_latency(&params, 8080.0, 1e9, 0).unwrap();
        assert_eq!(c.tau_v, transmission_slots(8080.0, &params));
        assert_eq!(c.f_bc_c, 0.0);
    }

    #[test]
    fn zero_rate_is_rejected() {
        let params = ConsensusParams::default();
        assert!(matches!(
            consensus_latency(&params, 100.0, 0.0, &[1.0]),
            Err(LedgerError::ZeroRate)
        ));
        assert!(matches!(
            consensus_latency(&params, 100.0, 1.0, &[1.0, 0.0]),
            Err(LedgerError::ZeroRate)
        ));
    }

    #[test]
    fn tamper_time_examples() {
        assert_eq!(tamper_time(10, 3.0), 15.0);
        assert_eq!(tamper_time(10, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn every_bit_flip_is_detected(block in 1usize..8, byte in any::<prop::sample::Index>(), bit in 0u8..8, field in 0u8..4) {
            let mut l = chain(7);
            let b = &mut l.blocks_mut()[block];
            match field {
                0 => { let i = byte.index(8); let mut v = b.index.to_le_bytes(); v[i] ^= 1 << bit; b.index = u64::from_le_bytes(v); }
                1 => b.prev_hash[byte.index(32)] ^= 1 << bit,
                2 => { let i = byte.index(b.body.len()); b.body[i] ^= 1 << bit; }
                _ => b.hash[byte.index(32)] ^= 1 << bit,
            }
            let v = l.verify_chain().unwrap_err();
            prop_assert_eq!(v.index, block);
        }

        #[test]
        fn latency_monotone_in_rate_and_size(
            size in 80.0f64..1e5, grow in 0.0f64..1e4,
            rate in 1e5f64..1e10, boost in 1.0f64..10.0, nv in 0usize..10,
        ) {
            let params = ConsensusParams { kappa_bc: 2e3, ..Default::default() };
            let base = uniform_consensus_latency(&params, size, rate, nv).unwrap();
            let faster = uniform_consensus_latency(&params, size, rate * boost, nv).unwrap();
            let bigger = uniform_consensus_latency(&params, size + grow, rate, nv).unwrap();
            prop_assert!(faster.tau_bc <= base.tau_bc);
            prop_assert!(bigger.tau_bc >= base.tau_bc);
            prop_assert_eq!(base.tau_bc, base.tau_g + base.tau_v + base.tau_c);
        }

        #[test]
        fn miner_cycles_affine_in_block_size(size in 80.0f64..1e6, nv in 0usize..20) {
            let k = 1e6;
            let slope = miner_cycles(size + 1.0, nv, k, true) - miner_cycles(size, nv, k, true);
            prop_assert!((slope - k * (1.0 + nv as f64)).abs() <= 1e-6 * k * (1.0 + nv as f64));
        }
    }
}
