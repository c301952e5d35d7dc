//! Constrained MDP of one serving base station.
//!
//! Each slot the agent picks `u` in `[0, 1]`, mapped to a service rate `a` in
//! `{0} ∪ [min_rate, capacity]` CPU cycles per slot. A positive rate is held
//! until the slot's blockchain and service work completes (`ceil(tau)` slots),
//! which is what makes capacity scarce in later slots. Zero rate is a denial of
//! service: cost 1, reward 0.
//!
//! Rates are integer cycle counts so that the capacity identity
//! `sum(active rates) + f_a == capacity` holds exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, LedgerError};
use crate::ledger::{uniform_consensus_latency, ConsensusCost, ConsensusParams};
use crate::workload::{max_demand, SlotDemand, WorkloadConfig};

/// How the occupancy feature `rho` is computed from the allocation records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Compression {
    /// Remaining work over capacity: `sum(remaining * rate) / F / tau_max`.
    #[default]
    RemainingWork,
    /// `sum(remaining) / F / tau_max`, dimensionally odd but kept for comparison.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// CPU cycles per slot of the serving station.
    pub capacity: u64,
    /// Smallest nonzero service rate, CPU cycles per slot.
    pub min_rate: u64,
    pub gamma_r: f64,
    pub gamma_c: f64,
    /// Tolerated per-slot DoS probability.
    pub epsilon_max: f64,
    /// Latency normalizer, slots.
    pub tau_max: f64,
    /// Longest demand-only holding time, slots.
    pub t_max: u64,
    pub compression: Compression,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::derive(
            &WorkloadConfig::desk(),
            &ConsensusParams {
                kappa_bc: 2e3,
                ..Default::default()
            },
            50_000_000,
            312_500,
            10,
        )
    }
}

impl EnvConfig {
    /// Fills `tau_max` and `t_max` from the workload bounds. The worst
    /// blockchain latency uses the largest block, the minimum rate and a
    /// committee spanning every station.
    pub fn derive(
        workload: &WorkloadConfig,
        consensus: &ConsensusParams,
        capacity: u64,
        min_rate: u64,
        n_bs: usize,
    ) -> Self {
        let f_r_max = max_demand(workload);
        let dt = min_rate.max(1) as f64;
        let tau_bc_max = uniform_consensus_latency(
            consensus,
            workload.max_block_size(),
            dt,
            n_bs.saturating_sub(1),
        )
        .map(|c| c.tau_bc)
        .unwrap_or(0.0);
        Self {
            capacity,
            min_rate,
            gamma_r: 0.95,
            gamma_c: 0.95,
            epsilon_max: 0.02,
            tau_max: (tau_bc_max + f_r_max / dt).ceil().max(1.0),
            t_max: (f_r_max / dt).ceil() as u64,
            compression: Compression::RemainingWork,
        }
    }

    /// Bound on the long-term discounted cost, rounded to 12 significant
    /// digits so that 0.02 / (1 - 0.95) is exactly 0.4.
    pub fn e_max(&self) -> f64 {
        let raw = self.epsilon_max / (1.0 - self.gamma_c);
        format!("{raw:.11e}").parse().unwrap_or(raw)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_rate == 0 || self.min_rate > self.capacity {
            return Err(ConfigError::new(
                "env.min_rate",
                format!("need 0 < min_rate <= capacity, got {} / {}", self.min_rate, self.capacity),
            ));
        }
        for (field, g) in [("env.gamma_r", self.gamma_r), ("env.gamma_c", self.gamma_c)] {
            if !(g > 0.0 && g < 1.0) {
                return Err(ConfigError::new(field, format!("must lie in (0, 1), got {g}")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_max) {
            return Err(ConfigError::new("env.epsilon_max", "must be a probability"));
        }
        if !(self.tau_max.is_finite() && self.tau_max > 0.0) {
            return Err(ConfigError::new("env.tau_max", "must be positive"));
        }
        if self.t_max == 0 {
            return Err(ConfigError::new("env.t_max", "must be at least one slot"));
        }
        Ok(())
    }
}

/// A service rate still held by work allocated in an earlier slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub slot_allocated: u64,
    pub rate: u64,
    /// Slots until the rate is released.
    pub remaining: u64,
}

/// Maps the actor output to a service rate. Rates below `min_rate`, and any
/// request made while less than `min_rate` is free, become a denial.
pub fn map_action(u: f64, f_a: u64, min_rate: u64, capacity: u64) -> u64 {
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
    let candidate = (u * capacity as f64).floor() as u64;
    if candidate < min_rate || f_a < min_rate {
        0
    } else {
        candidate.min(f_a)
    }
}

/// Occupancy feature in `[0, 1]`.
pub fn compress(records: &[AllocationRecord], capacity: u64, tau_max: f64, mode: Compression) -> f64 {
    let load: f64 = match mode {
        Compression::RemainingWork => records
            .iter()
            .map(|r| r.remaining as f64 * r.rate as f64)
            .sum(),
        Compression::Literal => records.iter().map(|r| r.remaining as f64).sum(),
    };
    (load / capacity as f64 / tau_max).clamp(0.0, 1.0)
}

/// `sum(gamma^k * c_k)`.
pub fn discounted_cost_oracle(costs: &[u8], gamma: f64) -> f64 {
    costs
        .iter()
        .rev()
        .fold(0.0, |acc, &c| f64::from(c) + gamma * acc)
}

/// Counters that should stay at zero in a well-configured run, plus a few
/// that describe it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Telemetry {
    pub steps: u64,
    pub dos: u64,
    /// Denials forced by a malicious miner.
    pub overrides: u64,
    /// Steps where `sum(rates) + f_a != capacity`.
    pub conservation_violations: u64,
    /// Steps whose latency exceeded `tau_max` and had the reward clamped.
    pub reward_clamps: u64,
    /// Records whose holding time was cut to `t_max`.
    pub hold_clamps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub slot: u64,
    pub u: f64,
    /// Service rate actually granted.
    pub action: u64,
    pub reward: f64,
    pub cost: u8,
    pub dos: bool,
    pub tau_bc: Option<f64>,
    pub tau_sp: Option<f64>,
    pub tau_total: Option<f64>,
    /// Free capacity after this slot's allocation and releases.
    pub f_a: u64,
    pub rho: f64,
}

/// One line of the per-step trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: u64,
    pub u: f64,
    pub a: u64,
    pub f_a: u64,
    pub rho: f64,
    pub r: f64,
    pub c: u8,
    pub tau_bc: Option<f64>,
    pub tau_sp: Option<f64>,
}

impl From<&SlotOutcome> for TraceRow {
    fn from(o: &SlotOutcome) -> Self {
        Self {
            slot: o.slot,
            u: o.u,
            a: o.action,
            f_a: o.f_a,
            rho: o.rho,
            r: o.reward,
            c: o.cost,
            tau_bc: o.tau_bc,
            tau_sp: o.tau_sp,
        }
    }
}

/// Raw allocation state plus the derived observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    cfg: EnvConfig,
    slot: u64,
    records: Vec<AllocationRecord>,
    allocated: u64,
    telemetry: Telemetry,
}

impl EnvState {
    pub fn new(cfg: EnvConfig) -> Self {
        Self {
            cfg,
            slot: 0,
            records: Vec::new(),
            allocated: 0,
            telemetry: Telemetry::default(),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn records(&self) -> &[AllocationRecord] {
        &self.records
    }

    pub fn telemetry(&self) -> Telemetry {
        self.telemetry
    }

    /// Free CPU cycles per slot.
    pub fn available(&self) -> u64 {
        self.cfg.capacity - self.allocated
    }

    pub fn rho(&self) -> f64 {
        compress(&self.records, self.cfg.capacity, self.cfg.tau_max, self.cfg.compression)
    }

    /// Compressed observation `(f_a / F, rho)`.
    pub fn observe(&self) -> [f64; 2] {
        [self.available() as f64 / self.cfg.capacity as f64, self.rho()]
    }

    /// Checks `sum(rates) + f_a == F`.
    pub fn capacity_conserved(&self) -> bool {
        let sum: u64 = self.records.iter().map(|r| r.rate).sum();
        sum == self.allocated && sum + self.available() == self.cfg.capacity
    }

    /// Clears records and counters, keeping the configuration.
    pub fn reset(&mut self) {
        self.slot = 0;
        self.records.clear();
        self.allocated = 0;
        self.telemetry = Telemetry::default();
    }

    /// Advances one slot. `denial_prob` is the chance that a malicious miner
    /// overrides a positive allocation with a denial; `consensus` returns the
    /// blockchain cost of the slot's block for a given committee rate.
    pub fn step<R, C>(
        &mut self,
        u: f64,
        demand: &SlotDemand,
        denial_prob: f64,
        consensus: C,
        rng: &mut R,
    ) -> Result<SlotOutcome, LedgerError>
    where
        R: Rng + ?Sized,
        C: FnOnce(f64) -> Result<ConsensusCost, LedgerError>,
    {
        let cfg = &self.cfg;
        let mut action = map_action(u, self.available(), cfg.min_rate, cfg.capacity);
        if action > 0 && denial_prob > 0.0 && rng.random_bool(denial_prob.min(1.0)) {
            action = 0;
            self.telemetry.overrides += 1;
        }

        let (reward, cost, tau_bc, tau_sp, tau_total) = if action == 0 {
            (0.0, 1, None, None, None)
        } else {
            let rate = action as f64;
            let tau_bc = consensus(rate)?.tau_bc;
            let tau_sp = demand.f_r / rate;
            let tau = tau_bc + tau_sp;
            let raw = -tau / cfg.tau_max;
            if raw < -1.0 {
                self.telemetry.reward_clamps += 1;
            }
            let mut hold = tau.ceil() as u64;
            if hold > cfg.t_max.max(cfg.tau_max as u64) {
                hold = cfg.t_max.max(cfg.tau_max as u64);
                self.telemetry.hold_clamps += 1;
            }
            if hold > 0 {
                self.records.push(AllocationRecord {
                    slot_allocated: self.slot,
                    rate: action,
                    remaining: hold,
                });
                self.allocated += action;
            }
            (raw.clamp(-1.0, 0.0), 0, Some(tau_bc), Some(tau_sp), Some(tau))
        };

        // Every held rate serves this slot, then ages by one.
        let mut released = 0;
        self.records.retain_mut(|r| {
            r.remaining -= 1;
            if r.remaining == 0 {
                released += r.rate;
                false
            } else {
                true
            }
        });
        self.allocated -= released;

        self.telemetry.steps += 1;
        if cost == 1 {
            self.telemetry.dos += 1;
        }
        if !self.capacity_conserved() {
            self.telemetry.conservation_violations += 1;
        }
        debug_assert_eq!(cost == 1, action == 0);

        let outcome = SlotOutcome {
            slot: self.slot,
            u,
            action,
            reward,
            cost,
            dos: cost == 1,
            tau_bc,
            tau_sp,
            tau_total,
            f_a: self.available(),
            rho: self.rho(),
        };
        self.slot += 1;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const F: u64 = 1_600_000_000;
    const DF: u64 = 10_000_000;

    fn cfg() -> EnvConfig {
        EnvConfig {
            capacity: F,
            min_rate: DF,
            tau_max: 100.0,
            t_max: 160,
            ..EnvConfig::default()
        }
    }

    fn fixed_bc(tau_bc: f64) -> impl Fn(f64) -> Result<ConsensusCost, LedgerError> {
        move |_| {
            Ok(ConsensusCost {
                f_bc_g: 0.0,
                f_bc_c: 0.0,
                f_bc_v: 0.0,
                tau_g: tau_bc,
                tau_v: 0.0,
                tau_c: 0.0,
                tau_bc,
            })
        }
    }

    fn demand(f_r: f64) -> SlotDemand {
        SlotDemand {
            slot: 0,
            num_requests: 1,
            request_sizes: vec![1],
            f_r,
            block_size: 88.0,
        }
    }

    #[test]
    fn map_action_examples() {
        assert_eq!(map_action(0.0, F, DF, F), 0);
        assert_eq!(map_action(1.0, F, DF, F), F);
        assert_eq!(map_action(0.5, 400_000_000, DF, F), 400_000_000);
        assert_eq!(map_action(0.001, F, DF, F), 0);
        assert_eq!(map_action(0.9, DF - 1, DF, F), 0);
        assert_eq!(map_action(f64::NAN, F, DF, F), 0);
    }

    #[test]
    fn denial_branch() {
        let mut env = EnvState::new(cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = env.step(0.001, &demand(1e6), 0.0, fixed_bc(0.5), &mut rng).unwrap();
        assert_eq!((o.action, o.reward, o.cost, o.dos), (0, 0.0, 1, true));
        assert!(env.records().is_empty());
    }

    #[test]
    fn allocation_holds_then_releases() {
        let mut env = EnvState::new(cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = 400_000_000.0 / F as f64;
        let o = env.step(u, &demand(8e8), 0.0, fixed_bc(0.5), &mut rng).unwrap();
        assert_eq!(o.action, 400_000_000);
        assert_eq!(o.tau_total, Some(2.5));
        assert_relative_eq!(o.reward, -0.025);
        // Allocated at slot 0 with three slots of holding time: busy in 0, 1, 2.
        assert_eq!(env.records()[0].remaining, 2);
        assert_eq!(env.available(), F - 400_000_000);
        env.step(0.0, &demand(0.0), 0.0, fixed_bc(0.5), &mut rng).unwrap();
        assert_eq!(env.available(), F - 400_000_000);
        let o = env.step(0.0, &demand(0.0), 0.0, fixed_bc(0.5), &mut rng).unwrap();
        assert_eq!(o.f_a, F);
        assert!(env.records().is_empty());
    }

    #[test]
    fn zero_demand_still_mines() {
        let mut env = EnvState::new(cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = env.step(0.5, &demand(0.0), 0.0, fixed_bc(0.5), &mut rng).unwrap();
        assert_eq!(o.tau_sp, Some(0.0));
        assert_eq!(o.tau_total, Some(0.5));
        assert_eq!(o.cost, 0);
    }

    #[test]
    fn compress_examples() {
        assert_eq!(compress(&[], F, 100.0, Compression::RemainingWork), 0.0);
        let recs = [
            AllocationRecord { slot_allocated: 0, rate: 1_000_000_000, remaining: 3 },
            AllocationRecord { slot_allocated: 0, rate: 500_000_000, remaining: 2 },
        ];
        assert_relative_eq!(compress(&recs, F, 100.0, Compression::RemainingWork), 0.025);
        let full = [AllocationRecord { slot_allocated: 0, rate: F, remaining: 100 }];
        assert_eq!(compress(&full, F, 100.0, Compression::RemainingWork), 1.0);
        assert!(compress(&recs, F, 100.0, Compression::Literal) < 1e-8);
    }

    #[test]
    fn discounted_cost_examples() {
        assert_eq!(discounted_cost_oracle(&[0; 50], 0.95), 0.0);
        let ones = vec![1u8; 2000];
        assert_relative_eq!(discounted_cost_oracle(&ones, 0.95), 20.0, max_relative = 1e-12);
        assert_relative_eq!(discounted_cost_oracle(&[1, 0, 1], 0.5), 1.25);
        assert_eq!(EnvConfig::default().e_max(), 0.4);
    }

    #[test]
    fn malicious_override_forces_denial() {
        let mut env = EnvState::new(cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o = env.step(0.5, &demand(1e6), 1.0, fixed_bc(0.5), &mut rng).unwrap();
        assert!(o.dos);
        assert_eq!(env.telemetry().overrides, 1);
    }

    #[test]
    fn zero_rate_error_propagates() {
        let mut env = EnvState::new(cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = env.step(0.5, &demand(1e6), 0.0, |_| Err(LedgerError::ZeroRate), &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn derived_normalizers() {
        let w = WorkloadConfig::desk();
        let c = EnvConfig::default();
        let dt = c.min_rate as f64;
        assert_eq!(c.t_max, (max_demand(&w) / dt).ceil() as u64);
        assert!(c.tau_max >= max_demand(&w) / dt);
        assert!(c.validate().is_ok());
        let mut bad = c.clone();
        bad.min_rate = 0;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn random_rollouts_keep_invariants(seed in any::<u64>()) {
            let w = WorkloadConfig::desk();
            let params = ConsensusParams { kappa_bc: 2e3, ..Default::default() };
            let mut env = EnvState::new(EnvConfig::default());
            let t_max = env.config().t_max.max(env.config().tau_max as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in 0..300 {
                let d = crate::workload::draw_slot_demand(&w, t, &mut rng);
                let u: f64 = rand::Rng::random(&mut rng);
                let o = env.step(u, &d, 0.1, |a| uniform_consensus_latency(&params, d.block_size, a, 4), &mut rng).unwrap();
                prop_assert!(env.capacity_conserved());
                prop_assert!((-1.0..=0.0).contains(&o.reward));
                prop_assert_eq!(o.dos, o.action == 0);
                prop_assert_eq!(o.dos, o.cost == 1);
                prop_assert!(!o.dos || o.reward == 0.0);
                let [fa, rho] = env.observe();
                prop_assert!((0.0..=1.0).contains(&fa) && (0.0..=1.0).contains(&rho));
                prop_assert!(env.records().iter().all(|r| env.slot() - r.slot_allocated <= t_max));
            }
            prop_assert_eq!(env.telemetry().conservation_violations, 0);
        }
    }
}
