//! Per-slot user request generation.
//!
//! Request counts are Poisson with mean `lambda_bar`, truncated at
//! `arrival_cap` so that the per-slot CPU demand has a finite maximum. Each
//! request carries a payload size drawn uniformly in `[size_min, size_max]`
//! bytes. The demand in CPU cycles and the block size follow from those two
//! draws.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// How the per-slot CPU demand is computed from the request sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DemandFormula {
    /// `kappa_sp * n * sum(sizes)`: keeps the leading request-count factor.
    AsWritten,
    /// `kappa_sp * sum(sizes)`: cycles proportional to bytes processed.
    #[default]
    SumOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Mean number of requests per slot.
    pub lambda_bar: f64,
    /// Smallest request payload, bytes.
    pub size_min: u32,
    /// Largest request payload, bytes.
    pub size_max: u32,
    /// CPU cycles per payload byte.
    pub kappa_sp: f64,
    /// Block body bytes per request record.
    pub ell_c: f64,
    /// Block header bytes.
    pub ell_h: f64,
    /// Upper truncation of the Poisson request count.
    pub arrival_cap: u32,
    /// Slot length in seconds.
    pub slot_duration: f64,
    pub demand_formula: DemandFormula,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl WorkloadConfig {
    /// Full-scale values: 1000 requests per slot of 1 to 10 KB each.
    pub fn paper_scale() -> Self {
        Self {
            lambda_bar: 1000.0,
            size_min: 1_000,
            size_max: 10_000,
            kappa_sp: 330.0,
            ell_c: 8.0,
            ell_h: 80.0,
            arrival_cap: default_arrival_cap(1000.0),
            slot_duration: 1e-3,
            demand_formula: DemandFormula::SumOnly,
        }
    }

    /// Reduced request rate that trains in minutes on one core.
    pub fn desk() -> Self {
        Self {
            lambda_bar: 20.0,
            arrival_cap: default_arrival_cap(20.0),
            ..Self::paper_scale()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("workload.lambda_bar", self.lambda_bar),
            ("workload.kappa_sp", self.kappa_sp),
            ("workload.ell_c", self.ell_c),
            ("workload.ell_h", self.ell_h),
            ("workload.slot_duration", self.slot_duration),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(field, format!("must be positive, got {v}")));
            }
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(ConfigError::new(
                "workload.size_min",
                format!(
                    "need 0 < size_min <= size_max, got {}..{}",
                    self.size_min, self.size_max
                ),
            ));
        }
        if f64::from(self.arrival_cap) < self.lambda_bar {
            return Err(ConfigError::new(
                "workload.arrival_cap",
                format!("{} is below lambda_bar {}", self.arrival_cap, self.lambda_bar),
            ));
        }
        Ok(())
    }

    /// Block size for a slot carrying `num_requests` requests.
    pub fn block_size(&self, num_requests: u32) -> f64 {
        self.ell_h + self.ell_c * f64::from(num_requests)
    }

    pub fn mean_block_size(&self) -> f64 {
        self.ell_h + self.ell_c * self.lambda_bar
    }

    pub fn max_block_size(&self) -> f64 {
        self.block_size(self.arrival_cap)
    }

    pub fn mean_request_size(&self) -> f64 {
        0.5 * (f64::from(self.size_min) + f64::from(self.size_max))
    }

    /// CPU cycles needed to serve requests with the given payload sizes.
    pub fn demand_cycles(&self, sizes: &[u32]) -> f64 {
        let total: f64 = sizes.iter().map(|&s| f64::from(s)).sum();
        match self.demand_formula {
            DemandFormula::SumOnly => self.kappa_sp * total,
            DemandFormula::AsWritten => self.kappa_sp * sizes.len() as f64 * total,
        }
    }
}

/// `ceil(lambda + 5 sqrt(lambda))`, far enough in the Poisson tail that the
/// truncation is rarely active.
pub fn default_arrival_cap(lambda_bar: f64) -> u32 {
    (lambda_bar + 5.0 * lambda_bar.sqrt()).ceil() as u32
}

/// Requests arriving in one slot and the quantities derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDemand {
    pub slot: u64,
    pub num_requests: u32,
    /// Payload sizes in bytes, one per request.
    pub request_sizes: Vec<u32>,
    /// CPU cycles required to serve every request of the slot.
    pub f_r: f64,
    /// Header plus body bytes of the block recording this slot.
    pub block_size: f64,
}

impl SlotDemand {
    /// Demand built from explicit request sizes.
    pub fn from_sizes(cfg: &WorkloadConfig, slot: u64, request_sizes: Vec<u32>) -> Self {
        let num_requests = request_sizes.len() as u32;
        Self {
            slot,
            num_requests,
            f_r: cfg.demand_cycles(&request_sizes),
            block_size: cfg.block_size(num_requests),
            request_sizes,
        }
    }

    pub fn empty(cfg: &WorkloadConfig, slot: u64) -> Self {
        Self::from_sizes(cfg, slot, Vec::new())
    }

    pub fn body_size(&self, cfg: &WorkloadConfig) -> f64 {
        cfg.ell_c * f64::from(self.num_requests)
    }
}

/// Draws the requests of one slot.
pub fn draw_slot_demand<R: Rng + ?Sized>(cfg: &WorkloadConfig, slot: u64, rng: &mut R) -> SlotDemand {
    let count = Poisson::new(cfg.lambda_bar)
        .map(|p| p.sample(rng))
        .unwrap_or(0.0);
    let n = (count as u64).min(u64::from(cfg.arrival_cap)) as u32;
    let sizes = (0..n)
        .map(|_| rng.random_range(cfg.size_min..=cfg.size_max))
        .collect();
    SlotDemand::from_sizes(cfg, slot, sizes)
}

/// Largest demand any slot can produce: `arrival_cap` requests of `size_max`.
pub fn max_demand(cfg: &WorkloadConfig) -> f64 {
    let sizes = vec![cfg.size_max; cfg.arrival_cap as usize];
    cfg.demand_cycles(&sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> WorkloadConfig {
        WorkloadConfig::desk()
    }

    #[test]
    fn empty_slot_is_header_only() {
        let d = SlotDemand::empty(&cfg(), 7);
        assert_eq!(d.f_r, 0.0);
        assert_eq!(d.block_size, 80.0);
        assert_eq!(d.num_requests, 0);
    }

    #[test]
    fn thousand_requests_give_8080_byte_block() {
        let c = WorkloadConfig::paper_scale();
        assert_eq!(c.block_size(1000), 8080.0);
    }

    #[test]
    fn sum_only_demand() {
        let d = SlotDemand::from_sizes(&cfg(), 0, vec![1000, 2000]);
        assert_eq!(d.f_r, 990_000.0);
    }

    #[test]
    fn max_demand_examples() {
        let mut c = cfg();
        c.arrival_cap = 2;
        c.size_max = 10_000;
        assert_eq!(max_demand(&c), 6.6e6);
        c.demand_formula = DemandFormula::AsWritten;
        assert_eq!(max_demand(&c), 1.32e7);
        c.arrival_cap = 0;
        assert_eq!(max_demand(&c), 0.0);
    }

    #[test]
    fn validate_rejects_bad_ranges() {
        let mut c = cfg();
        c.size_min = 20_000;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.arrival_cap = 3;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.kappa_sp = -1.0;
        assert!(c.validate().is_err());
        assert!(WorkloadConfig::paper_scale().validate().is_ok());
    }

    #[test]
    fn poisson_mean_within_three_standard_errors() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let total: u64 = (0..n)
            .map(|t| u64::from(draw_slot_demand(&c, t, &mut rng).num_requests))
            .sum();
        let mean = total as f64 / n as f64;
        let se = (c.lambda_bar / n as f64).sqrt();
        assert!((mean - c.lambda_bar).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let c = cfg();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for t in 0..200 {
            assert_eq!(draw_slot_demand(&c, t, &mut a), draw_slot_demand(&c, t, &mut b));
        }
    }

    proptest! {
        #[test]
        fn draws_respect_bounds(seed in any::<u64>(), as_written in any::<bool>()) {
            let mut c = cfg();
            if as_written {
                c.demand_formula = DemandFormula::AsWritten;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cap = max_demand(&c);
            for t in 0..50 {
                let d = draw_slot_demand(&c, t, &mut rng);
                prop_assert!(d.f_r >= 0.0 && d.f_r <= cap);
                prop_assert_eq!(d.request_sizes.len() as u32, d.num_requests);
                prop_assert!(d.num_requests <= c.arrival_cap);
                prop_assert!(d.request_sizes.iter().all(|&s| (c.size_min..=c.size_max).contains(&s)));
                prop_assert_eq!(d.block_size, c.ell_h + c.ell_c * f64::from(d.num_requests));
            }
        }

        #[test]
        fn block_size_slope_is_ell_c(n in 0u32..5000) {
            let c = cfg();
            prop_assert_eq!(c.block_size(n + 1) - c.block_size(n), c.ell_c);
        }
    }
}
