//! Full per-slot pipeline of the blockchain-secured MEC network.
//!
//! Per slot: draw requests, elect the committee from current reputations,
//! pick the miner, package the block, let the agent's rate serve the slot
//! (blockchain plus service latency), collect user feedback about the miner
//! and update every reputation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvState, SlotOutcome, Telemetry};
use crate::error::{ConfigError, Error, Result};
use crate::ledger::{uniform_consensus_latency, ConsensusParams, Ledger};
use crate::reputation::{
    elect_committee, generate_feedback, select_miner, update_reputation, BaseStationProfile,
    CommitteeSelection, MinerPolicy, ReputationConfig,
};
use crate::workload::{draw_slot_demand, WorkloadConfig};

/// Anything the agent can be trained against.
pub trait ControlEnv {
    /// Starts a fresh episode and returns the first observation.
    fn reset(&mut self, seed: u64) -> [f64; 2];
    fn observe(&self) -> [f64; 2];
    fn step(&mut self, u: f64) -> Result<SlotOutcome>;
    fn capacity_conserved(&self) -> bool;
    fn telemetry(&self) -> Telemetry;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_bs: usize,
    pub malicious_bs_ids: Vec<usize>,
    /// Per-slot denial probability of a malicious station acting as miner.
    pub denial_prob: f64,
    /// Share of users whose feedback inverts the truth.
    pub malicious_user_fraction: f64,
    /// Feedback reports per slot; `None` means one per request.
    pub feedback_users: Option<usize>,
    pub miner_policy: MinerPolicy,
    /// Keep the hash chain of every block (costs memory on long runs).
    pub keep_ledger: bool,
    pub workload: WorkloadConfig,
    pub reputation: ReputationConfig,
    pub consensus: ConsensusParams,
    pub env: EnvConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_bs: 10,
            malicious_bs_ids: Vec::new(),
            denial_prob: 0.0,
            malicious_user_fraction: 0.0,
            feedback_users: None,
            miner_policy: MinerPolicy::RposRandom,
            keep_ledger: false,
            workload: WorkloadConfig::desk(),
            reputation: ReputationConfig::default(),
            consensus: ConsensusParams {
                kappa_bc: 2e3,
                ..Default::default()
            },
            env: EnvConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_bs == 0 {
            return Err(ConfigError::new("network.n_bs", "need at least one base station"));
        }
        if let Some(&id) = self.malicious_bs_ids.iter().find(|&&id| id >= self.n_bs) {
            return Err(ConfigError::new(
                "network.malicious_bs_ids",
                format!("id {id} is not below n_bs {}", self.n_bs),
            ));
        }
        for (field, p) in [
            ("network.denial_prob", self.denial_prob),
            ("network.malicious_user_fraction", self.malicious_user_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::new(field, format!("must be a probability, got {p}")));
            }
        }
        if !(self.consensus.kappa_bc > 0.0 && self.consensus.link_rate_bps > 0.0) {
            return Err(ConfigError::new("consensus", "kappa_bc and link_rate_bps must be positive"));
        }
        self.workload.validate()?;
        self.reputation.validate()?;
        self.env.validate()
    }

    /// Re-derives `tau_max` and `t_max` after workload or capacity edits.
    pub fn rederive_env(&mut self) {
        let keep = self.env.clone();
        self.env = EnvConfig {
            gamma_r: keep.gamma_r,
            gamma_c: keep.gamma_c,
            epsilon_max: keep.epsilon_max,
            compression: keep.compression,
            ..EnvConfig::derive(&self.workload, &self.consensus, keep.capacity, keep.min_rate, self.n_bs)
        };
    }

    fn profiles(&self) -> Vec<BaseStationProfile> {
        (0..self.n_bs)
            .map(|id| {
                if self.malicious_bs_ids.contains(&id) {
                    BaseStationProfile::malicious(id, self.reputation.history_window, self.denial_prob)
                } else {
                    BaseStationProfile::new(id, self.reputation.history_window)
                }
            })
            .collect()
    }
}

pub struct MecNetwork {
    cfg: NetworkConfig,
    rng: ChaCha8Rng,
    env: EnvState,
    profiles: Vec<BaseStationProfile>,
    ledger: Ledger,
    last_selection: Option<CommitteeSelection>,
}

impl MecNetwork {
    pub fn new(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            env: EnvState::new(cfg.env.clone()),
            profiles: cfg.profiles(),
            ledger: Ledger::new(cfg.workload.ell_h, cfg.workload.ell_c),
            last_selection: None,
            cfg,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn env(&self) -> &EnvState {
        &self.env
    }

    pub fn profiles(&self) -> &[BaseStationProfile] {
        &self.profiles
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn last_selection(&self) -> Option<&CommitteeSelection> {
        self.last_selection.as_ref()
    }
}

impl ControlEnv for MecNetwork {
    fn reset(&mut self, seed: u64) -> [f64; 2] {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.env.reset();
        self.profiles = self.cfg.profiles();
        self.ledger = Ledger::new(self.cfg.workload.ell_h, self.cfg.workload.ell_c);
        self.last_selection = None;
        self.env.observe()
    }

    fn observe(&self) -> [f64; 2] {
        self.env.observe()
    }

    fn step(&mut self, u: f64) -> Result<SlotOutcome> {
        let slot = self.env.slot();
        let demand = draw_slot_demand(&self.cfg.workload, slot, &mut self.rng);
        let elected = elect_committee(&self.profiles, &self.cfg.reputation, slot)?;
        let selection = select_miner(elected, self.cfg.miner_policy, &mut self.rng);
        let miner = selection.miner.expect("committee is never empty");
        let n_validators = selection.n_validators();

        if self.cfg.keep_ledger {
            self.ledger.append_block(&demand);
        }

        let denial = {
            let p = &self.profiles[miner];
            if p.is_malicious { p.denial_prob } else { 0.0 }
        };
        let params = &self.cfg.consensus;
        let block = demand.block_size;
        let outcome = self.env.step(
            u,
            &demand,
            denial,
            |rate| uniform_consensus_latency(params, block, rate, n_validators),
            &mut self.rng,
        )?;

        let users = self.cfg.feedback_users.unwrap_or(demand.num_requests as usize);
        let feedback = generate_feedback(
            miner,
            slot,
            !outcome.dos,
            users,
            self.cfg.malicious_user_fraction,
            self.cfg.reputation.truth_likelihood,
            &mut self.rng,
        );
        for p in &mut self.profiles {
            let batch = (p.id == miner).then_some(&feedback);
            update_reputation(p, batch, &self.cfg.reputation).map_err(Error::from)?;
        }
        self.last_selection = Some(selection);
        Ok(outcome)
    }

    fn capacity_conserved(&self) -> bool {
        self.env.capacity_conserved()
    }

    fn telemetry(&self) -> Telemetry {
        self.env.telemetry()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_outcomes() {
        let cfg = NetworkConfig {
            malicious_bs_ids: vec![1, 4],
            denial_prob: 0.3,
            malicious_user_fraction: 0.1,
            keep_ledger: true,
            ..Default::default()
        };
        let mut a = MecNetwork::new(cfg.clone(), 3).unwrap();
        let mut b = MecNetwork::new(cfg, 3).unwrap();
        for t in 0..500 {
            let u = (t % 17) as f64 / 16.0;
            assert_eq!(a.step(u).unwrap(), b.step(u).unwrap());
        }
        assert_eq!(a.ledger().blocks(), b.ledger().blocks());
        assert_eq!(a.ledger().len(), 501);
        assert!(a.ledger().verify_chain().is_ok());
        assert!(a.capacity_conserved());
    }

    #[test]
    fn malicious_miners_lose_reputation() {
        let cfg = NetworkConfig {
            malicious_bs_ids: vec![0, 1, 2],
            denial_prob: 0.8,
            ..Default::default()
        };
        let mut net = MecNetwork::new(cfg, 9).unwrap();
        for _ in 0..2000 {
            net.step(0.2).unwrap();
        }
        let rep = |id: usize| net.profiles()[id].reputation();
        let honest_min = (3..10).map(rep).fold(1.0, f64::min);
        let bad_max = (0..3).map(rep).fold(0.0, f64::max);
        assert!(bad_max < honest_min, "bad {bad_max} honest {honest_min}");
        let sel = net.last_selection().unwrap();
        assert!(sel.committee.iter().all(|&id| id >= 3));
        assert!(net.telemetry().overrides > 0);
    }

    #[test]
    fn reset_restarts_the_episode() {
        let mut net = MecNetwork::new(NetworkConfig::default(), 1).unwrap();
        let first: Vec<_> = (0..50).map(|_| net.step(0.3).unwrap()).collect();
        net.reset(1);
        assert_eq!(net.env().slot(), 0);
        let again: Vec<_> = (0..50).map(|_| net.step(0.3).unwrap()).collect();
        assert_eq!(first, again);
    }

    #[test]
    fn validate_rejects_out_of_range_ids() {
        let cfg = NetworkConfig {
            malicious_bs_ids: vec![10],
            ..Default::default()
        };
        assert!(MecNetwork::new(cfg, 0).is_err());
    }

    #[test]
    fn rederive_tracks_capacity() {
        let mut cfg = NetworkConfig::default();
        cfg.env.min_rate *= 2;
        cfg.env.gamma_c = 0.9;
        cfg.rederive_env();
        assert!(cfg.env.tau_max < EnvConfig::default().tau_max);
        assert_eq!(cfg.env.gamma_c, 0.9);
    }
}
