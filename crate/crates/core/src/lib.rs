//! Simulator and training harness for blockchain-secured mobile edge
//! computing: reputation-based committee election, a hash-chained ledger with
//! its consensus cost model, a constrained MDP of service-rate allocation and
//! a primal-dual actor-critic agent.

pub mod drl;
pub mod env;
pub mod error;
pub mod harness;
pub mod ledger;
pub mod network;
pub mod reputation;
pub mod workload;

pub use error::{Error, Result};

/// Independent seed for stream `index` of a run seeded with `seed`
/// (splitmix64 finalizer over the pair).
pub fn substream(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
