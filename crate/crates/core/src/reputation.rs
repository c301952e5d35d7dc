//! Base-station reputation from user feedback, committee election and miner
//! selection.
//!
//! Feedback bit `0` means "my request was served", `1` means "denied". The
//! DoS inference of a base station is the Bayesian posterior that it served
//! its slot, under a symmetric per-user likelihood `truth_likelihood`.
//! Reputations blend the current inference with a discounted average of the
//! recent reputation history.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ReputationError};

/// Discount applied to a historical reputation `k` slots old.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Discount {
    /// `e^-k`
    #[default]
    Exp,
    /// `(1/2)^k`
    Half,
    /// `1/k`
    Inv,
}

impl Discount {
    pub fn weight(self, age: usize) -> f64 {
        let k = age as f64;
        match self {
            Discount::Exp => (-k).exp(),
            Discount::Half => 0.5f64.powf(k),
            Discount::Inv => 1.0 / k,
        }
    }
}

/// Normalisation of the discounted history sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HistoryNorm {
    /// Divide by the window length `tau_xi`. A perfectly served base station
    /// then settles well below 1.
    Window,
    /// Divide by the sum of the discount weights used, a proper weighted
    /// average whose fixed point under perfect service is 1.
    #[default]
    Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationConfig {
    /// Prior probability that a base station serves its slot.
    pub prior_served: f64,
    /// Probability that one feedback bit reports the true outcome.
    pub truth_likelihood: f64,
    /// Weight of the current inference against the history.
    pub weight_inference: f64,
    /// Number of past slots in the history term.
    pub history_window: usize,
    pub discount: Discount,
    pub history_norm: HistoryNorm,
    /// Committee threshold as a multiple of the mean reputation.
    pub eta: f64,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        Self {
            prior_served: 0.8,
            truth_likelihood: 0.9,
            weight_inference: 0.2,
            history_window: 5,
            discount: Discount::Exp,
            history_norm: HistoryNorm::Weights,
            eta: 1.0,
        }
    }
}

impl ReputationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, p) in [
            ("reputation.prior_served", self.prior_served),
            ("reputation.truth_likelihood", self.truth_likelihood),
            ("reputation.weight_inference", self.weight_inference),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::new(field, format!("{p} is outside [0, 1]")));
            }
        }
        if self.history_window == 0 {
            return Err(ConfigError::new("reputation.history_window", "must be at least 1"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(ConfigError::new("reputation.eta", format!("must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStationProfile {
    pub id: usize,
    /// Most recent reputation last; holds at most `history_window` values.
    history: VecDeque<f64>,
    pub is_malicious: bool,
    /// Per-slot probability that a malicious station denies service.
    pub denial_prob: f64,
}

impl BaseStationProfile {
    /// A fresh station starts trusted with reputation 1.
    pub fn new(id: usize, history_window: usize) -> Self {
        let mut history = VecDeque::with_capacity(history_window.max(1));
        history.push_back(1.0);
        Self {
            id,
            history,
            is_malicious: false,
            denial_prob: 0.0,
        }
    }

    pub fn malicious(id: usize, history_window: usize, denial_prob: f64) -> Self {
        Self {
            is_malicious: true,
            denial_prob,
            ..Self::new(id, history_window)
        }
    }

    pub fn with_reputation(id: usize, history_window: usize, reputation: f64) -> Self {
        let mut p = Self::new(id, history_window);
        p.history.clear();
        p.history.push_back(reputation.clamp(0.0, 1.0));
        p
    }

    pub fn reputation(&self) -> f64 {
        self.history.back().copied().unwrap_or(0.0)
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    fn push(&mut self, value: f64, window: usize) {
        self.history.push_back(value);
        while self.history.len() > window.max(1) {
            self.history.pop_front();
        }
    }

    /// Whether this station refuses to serve the current slot.
    pub fn denies<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        self.is_malicious && rng.random_bool(self.denial_prob.clamp(0.0, 1.0))
    }
}

/// Feedback bits about one base station collected during one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackBatch {
    pub bs_id: usize,
    pub slot: u64,
    pub entries: Vec<u8>,
}

impl FeedbackBatch {
    pub fn new(bs_id: usize, slot: u64, entries: Vec<u8>) -> Self {
        Self { bs_id, slot, entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_denied(&self) -> usize {
        self.entries.iter().filter(|&&d| d != 0).count()
    }
}

/// Simulated feedback from `num_users` users about a station that did or did
/// not serve them.
///
/// Each user is malicious with probability `malicious_fraction` and then
/// reports the opposite of the truth. Honest users report the truth with
/// probability `truth_likelihood`.
#[allow(clippy::too_many_arguments)]
pub fn generate_feedback<R: Rng + ?Sized>(
    bs_id: usize,
    slot: u64,
    served: bool,
    num_users: usize,
    malicious_fraction: f64,
    truth_likelihood: f64,
    rng: &mut R,
) -> FeedbackBatch {
    let truth = u8::from(!served);
    let malicious_fraction = malicious_fraction.clamp(0.0, 1.0);
    let truth_likelihood = truth_likelihood.clamp(0.0, 1.0);
    let entries = (0..num_users)
        .map(|_| {
            if rng.random_bool(malicious_fraction) {
                1 - truth
            } else if rng.random_bool(truth_likelihood) {
                truth
            } else {
                1 - truth
            }
        })
        .collect();
    FeedbackBatch::new(bs_id, slot, entries)
}

/// Posterior probability that the station served its slot given the batch.
///
/// Works on log-likelihoods so batches of thousands of entries do not
/// underflow.
pub fn dos_inference(batch: &FeedbackBatch, cfg: &ReputationConfig) -> Result<f64, ReputationError> {
    if batch.is_empty() {
        return Err(ReputationError::NoFeedback);
    }
    let denied = batch.count_denied() as f64;
    let served = batch.entries.len() as f64 - denied;
    let p = cfg.truth_likelihood;
    // Skip zero counts so that 0 * ln(0) never turns into NaN.
    let term = |count: f64, prob: f64| if count > 0.0 { count * prob.ln() } else { 0.0 };
    let log_served = cfg.prior_served.ln() + term(served, p) + term(denied, 1.0 - p);
    let log_denied = (1.0 - cfg.prior_served).ln() + term(served, 1.0 - p) + term(denied, p);
    if log_served == f64::NEG_INFINITY && log_denied == f64::NEG_INFINITY {
        // Evidence impossible under both hypotheses; keep the prior.
        return Ok(cfg.prior_served);
    }
    Ok(1.0 / (1.0 + (log_denied - log_served).exp()))
}

/// Discounted history term over the last `history_window` reputations.
pub fn historical_reputation(profile: &BaseStationProfile, cfg: &ReputationConfig) -> f64 {
    let mut sum = 0.0;
    let mut weights = 0.0;
    for (age, value) in profile.history.iter().rev().take(cfg.history_window).enumerate() {
        let w = cfg.discount.weight(age + 1);
        sum += w * value;
        weights += w;
    }
    match cfg.history_norm {
        HistoryNorm::Window => sum / cfg.history_window as f64,
        HistoryNorm::Weights if weights > 0.0 => sum / weights,
        HistoryNorm::Weights => 0.0,
    }
}

/// Advances a station's reputation by one slot and returns the new value.
///
/// Without feedback the previous reputation carries over unchanged.
pub fn update_reputation(
    profile: &mut BaseStationProfile,
    batch: Option<&FeedbackBatch>,
    cfg: &ReputationConfig,
) -> Result<f64, ReputationError> {
    if profile.history.is_empty() {
        return Err(ReputationError::EmptyHistory(profile.id));
    }
    let next = match batch.filter(|b| !b.is_empty()) {
        None => profile.reputation(),
        Some(b) => {
            let inference = dos_inference(b, cfg)?;
            let history = historical_reputation(profile, cfg);
            (cfg.weight_inference * inference + (1.0 - cfg.weight_inference) * history).clamp(0.0, 1.0)
        }
    };
    profile.push(next, cfg.history_window);
    Ok(next)
}

/// How the miner is drawn from the committee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MinerPolicy {
    /// Uniformly at random among committee members.
    #[default]
    RposRandom,
    /// Always the highest-reputation member, lowest id on ties.
    PosMaxStake,
}

impl MinerPolicy {
    pub fn label(self) -> &'static str {
        match self {
            MinerPolicy::RposRandom => "rpos",
            MinerPolicy::PosMaxStake => "pos",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeSelection {
    pub slot: u64,
    pub threshold: f64,
    /// Committee member ids in ascending order.
    pub committee: Vec<usize>,
    pub miner: Option<usize>,
    pub validators: Vec<usize>,
    /// Committee member with the highest reputation (lowest id on ties):
    /// the guess of an attacker who knows the stake ranking.
    pub max_stake: usize,
}

impl CommitteeSelection {
    pub fn size(&self) -> usize {
        self.committee.len()
    }

    pub fn n_validators(&self) -> usize {
        self.validators.len()
    }
}

/// Elects every station whose reputation reaches `eta` times the mean.
pub fn elect_committee(
    profiles: &[BaseStationProfile],
    cfg: &ReputationConfig,
    slot: u64,
) -> Result<CommitteeSelection, ReputationError> {
    if profiles.is_empty() {
        return Err(ReputationError::NoBaseStations);
    }
    let reps: Vec<f64> = profiles.iter().map(BaseStationProfile::reputation).collect();
    let max = reps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // The rounded mean of equal values can land one ulp above them.
    let mean = (reps.iter().sum::<f64>() / reps.len() as f64).min(max);
    let threshold = cfg.eta * mean;
    let committee: Vec<usize> = profiles
        .iter()
        .zip(&reps)
        .filter(|(_, &r)| r >= threshold)
        .map(|(p, _)| p.id)
        .collect();
    let max_stake = profiles
        .iter()
        .zip(&reps)
        .filter(|(p, _)| committee.contains(&p.id))
        .fold(None::<(usize, f64)>, |best, (p, &r)| match best {
            Some((id, br)) if br > r || (br == r && id < p.id) => Some((id, br)),
            _ => Some((p.id, r)),
        })
        .map(|(id, _)| id)
        .ok_or(ReputationError::EmptyCommittee { threshold })?;
    let mut committee = committee;
    committee.sort_unstable();
    Ok(CommitteeSelection {
        slot,
        threshold,
        committee,
        miner: None,
        validators: Vec::new(),
        max_stake,
    })
}

/// Picks the miner; the remaining committee members become validators.
pub fn select_miner<R: Rng + ?Sized>(
    mut selection: CommitteeSelection,
    policy: MinerPolicy,
    rng: &mut R,
) -> CommitteeSelection {
    let miner = match policy {
        MinerPolicy::RposRandom => selection.committee[rng.random_range(0..selection.committee.len())],
        MinerPolicy::PosMaxStake => selection.max_stake,
    };
    selection.validators = selection.committee.iter().copied().filter(|&id| id != miner).collect();
    selection.miner = Some(miner);
    selection
}

/// Fraction of slots in which an attacker guessing the highest-stake
/// committee member named the actual miner.
pub fn miner_hit_probability(history: &[CommitteeSelection]) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let hits = history
        .iter()
        .filter(|s| s.miner == Some(s.max_stake))
        .count();
    hits as f64 / history.len() as f64
}

/// One row of the per-slot reputation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationRow {
    pub slot: u64,
    pub bs_id: usize,
    pub reputation: f64,
    pub committee_flag: u8,
    pub miner_flag: u8,
}

/// Trace rows for every station after a slot's selection.
pub fn reputation_rows(profiles: &[BaseStationProfile], selection: &CommitteeSelection) -> Vec<ReputationRow> {
    profiles
        .iter()
        .map(|p| ReputationRow {
            slot: selection.slot,
            bs_id: p.id,
            reputation: p.reputation(),
            committee_flag: u8::from(selection.committee.contains(&p.id)),
            miner_flag: u8::from(selection.miner == Some(p.id)),
        })
        .collect()
}
