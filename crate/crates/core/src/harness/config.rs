//! Scenario configuration file.
//!
//! A TOML document whose top-level `preset` key (`desk` or `paper`) selects
//! the defaults; every other key overrides one field of that preset. Unknown
//! keys are rejected. `env.tau_max` and `env.t_max` are derived from the
//! workload unless given, and the agent's discount factors and cost bound
//! follow the `[env]` section unless the `[agent]` section sets them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drl::{AgentConfig, TrainMode};
use crate::env::{Compression, EnvConfig};
use crate::error::{ConfigError, Error, Result};
use crate::ledger::ConsensusParams;
use crate::network::NetworkConfig;
use crate::reputation::{MinerPolicy, ReputationConfig};
use crate::workload::WorkloadConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Reduced workload that trains in well under a minute per run.
    #[default]
    Desk,
    /// Full-scale workload and the published hyper-parameters.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub n_bs: usize,
    pub malicious_bs_ids: Vec<usize>,
    pub denial_prob: f64,
    pub malicious_user_fraction: f64,
    /// Feedback reports per slot; one per request when absent.
    pub feedback_users: Option<usize>,
    pub miner_policy: MinerPolicy,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            n_bs: 10,
            malicious_bs_ids: Vec::new(),
            denial_prob: 0.0,
            malicious_user_fraction: 0.0,
            feedback_users: None,
            miner_policy: MinerPolicy::RposRandom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub capacity: u64,
    pub min_rate: u64,
    pub gamma_r: f64,
    pub gamma_c: f64,
    pub epsilon_max: f64,
    pub tau_max: Option<f64>,
    pub t_max: Option<u64>,
    pub compression: Compression,
}

impl Default for EnvSection {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            capacity: env.capacity,
            min_rate: env.min_rate,
            gamma_r: env.gamma_r,
            gamma_c: env.gamma_c,
            epsilon_max: env.epsilon_max,
            tau_max: None,
            t_max: None,
            compression: env.compression,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub mode: TrainMode,
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Greedy slots in the final evaluation.
    pub eval_slots: usize,
    /// Greedy slots evaluated after every episode (0 disables).
    pub episode_eval_slots: usize,
    /// Checkpoint to initialize from instead of random weights.
    pub warm_start: Option<PathBuf>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            mode: TrainMode::Constrained,
            episodes: 30,
            steps_per_episode: 1000,
            eval_slots: 2000,
            episode_eval_slots: 0,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationSweepSection {
    pub fractions: Vec<f64>,
    pub priors: Vec<f64>,
    /// Mean number of feedback reports per slot.
    pub feedback_mean: f64,
    pub n_slots: u64,
    /// Slots of the per-station trace of the configured network.
    pub trace_slots: u64,
    /// Largest fraction at which the configured prior must stay robust.
    pub robust_up_to: f64,
    pub robust_min: f64,
    /// Spearman correlation the fraction sweep must stay below.
    pub max_spearman: f64,
}

impl Default for ReputationSweepSection {
    fn default() -> Self {
        Self {
            fractions: (0..10).map(|i| f64::from(i) / 10.0).collect(),
            priors: vec![0.5, 0.8, 0.9],
            feedback_mean: 100.0,
            n_slots: 2000,
            trace_slots: 300,
            robust_up_to: 0.4,
            robust_min: 0.99,
            max_spearman: -0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusCompareSection {
    /// Mean requests per slot of each block-size point.
    pub mean_requests: Vec<f64>,
    /// Slots averaged per point and per policy.
    pub n_slots: u64,
    /// Stations kept at full reputation, hence the stationary committee.
    pub committee_size: usize,
    /// Reputation of the stations outside the committee.
    pub outsider_reputation: f64,
}

impl Default for ConsensusCompareSection {
    fn default() -> Self {
        Self {
            mean_requests: vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            n_slots: 10_000,
            committee_size: 5,
            outsider_reputation: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffSection {
    /// Cost bounds, trained in this order, each warm-started from the last.
    /// Loosest first: tightening a fast policy is easier than loosening a
    /// cautious one.
    pub e_max: Vec<f64>,
    /// Greedy slots evaluated after each episode to pick a point's policy.
    pub episode_eval_slots: usize,
    /// Episodes of the first (cold) point.
    pub first_episodes: usize,
    /// Episodes of every warm-started point.
    pub chain_episodes: usize,
    /// Reward weight of the fixed-weight baseline point.
    pub weighted_sum: f64,
    /// Rank correlation of latency against the bound must stay at or below
    /// this (the curve may be non-smooth, but must fall overall).
    pub max_latency_spearman: f64,
    /// Relative latency gap tolerated between the unbounded and the
    /// latency-only runs.
    pub unbounded_slack: f64,
}

impl Default for TradeoffSection {
    fn default() -> Self {
        Self {
            e_max: vec![2.0, 1.0, 0.7, 0.4, 0.2],
            episode_eval_slots: 1000,
            first_episodes: 30,
            chain_episodes: 30,
            weighted_sum: 0.5,
            max_latency_spearman: -0.7,
            unbounded_slack: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub preset: Preset,
    pub seed: u64,
    /// Chain length of `verify-ledger` when no dump is given.
    pub n_slots: u64,
    pub network: NetworkSection,
    pub workload: WorkloadConfig,
    pub reputation: ReputationConfig,
    pub consensus: ConsensusParams,
    pub env: EnvSection,
    pub agent: AgentConfig,
    pub training: TrainingSection,
    pub reputation_sweep: ReputationSweepSection,
    pub consensus_compare: ConsensusCompareSection,
    pub tradeoff: TradeoffSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl ScenarioConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            name: "desk".into(),
            preset,
            seed: 1,
            n_slots: 500,
            network: NetworkSection::default(),
            workload: WorkloadConfig::desk(),
            reputation: ReputationConfig::default(),
            consensus: NetworkConfig::default().consensus,
            env: EnvSection::default(),
            agent: AgentConfig::desk(),
            training: TrainingSection::default(),
            reputation_sweep: ReputationSweepSection::default(),
            consensus_compare: ConsensusCompareSection::default(),
            tradeoff: TradeoffSection::default(),
        };
        if preset == Preset::Paper {
            cfg.name = "paper".into();
            cfg.workload = WorkloadConfig::paper_scale();
            cfg.consensus = ConsensusParams::default();
            cfg.env.capacity = 1_600_000_000;
            cfg.env.min_rate = 10_000_000;
            cfg.agent = AgentConfig::default();
            cfg.training.episodes = 100;
            cfg.consensus_compare.mean_requests = vec![250.0, 500.0, 1000.0, 2000.0, 4000.0];
        }
        cfg.sync_agent(true, true);
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let preset = match user.get("preset") {
            None => Preset::Desk,
            Some(v) => v.clone().try_into::<Preset>()?,
        };
        let mut merged = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| ConfigError::new("preset", e.to_string()))?;
        merge(&mut merged, user.clone());
        let mut cfg: Self = toml::Value::Table(merged).try_into()?;
        let agent = user.get("agent").and_then(toml::Value::as_table);
        let set = |key: &str| agent.is_some_and(|t| t.contains_key(key));
        cfg.sync_agent(!set("e_max"), !set("gamma_c"));
        if !set("gamma_r") {
            cfg.agent.gamma_r = cfg.env.gamma_r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    fn sync_agent(&mut self, e_max: bool, gammas: bool) {
        if gammas {
            self.agent.gamma_r = self.env.gamma_r;
            self.agent.gamma_c = self.env.gamma_c;
        }
        if e_max {
            self.agent.e_max = self.env_config().e_max();
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        let e = &self.env;
        let derived = EnvConfig::derive(&self.workload, &self.consensus, e.capacity, e.min_rate, self.network.n_bs);
        EnvConfig {
            gamma_r: e.gamma_r,
            gamma_c: e.gamma_c,
            epsilon_max: e.epsilon_max,
            tau_max: e.tau_max.unwrap_or(derived.tau_max),
            t_max: e.t_max.unwrap_or(derived.t_max),
            compression: e.compression,
            ..derived
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            n_bs: n.n_bs,
            malicious_bs_ids: n.malicious_bs_ids.clone(),
            denial_prob: n.denial_prob,
            malicious_user_fraction: n.malicious_user_fraction,
            feedback_users: n.feedback_users,
            miner_policy: n.miner_policy,
            keep_ledger: false,
            workload: self.workload.clone(),
            reputation: self.reputation.clone(),
            consensus: self.consensus.clone(),
            env: self.env_config(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network_config().validate()?;
        self.agent.validate()?;
        if (self.agent.gamma_c - self.env.gamma_c).abs() > 0.0 {
            return Err(ConfigError::new("agent.gamma_c", "must equal env.gamma_c"));
        }
        let t = &self.training;
        if t.steps_per_episode == 0 {
            return Err(ConfigError::new("training.steps_per_episode", "must be positive"));
        }
        let s = &self.reputation_sweep;
        let probs = s.fractions.iter().chain(&s.priors);
        if let Some(p) = probs.copied().find(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::new("reputation_sweep", format!("{p} is not a probability")));
        }
        if !(s.feedback_mean >= 0.0 && s.feedback_mean.is_finite()) {
            return Err(ConfigError::new("reputation_sweep.feedback_mean", "must be finite and nonnegative"));
        }
        let c = &self.consensus_compare;
        if c.committee_size == 0 || c.committee_size > self.network.n_bs {
            return Err(ConfigError::new(
                "consensus_compare.committee_size",
                "must lie in 1..=network.n_bs",
            ));
        }
        if !(0.0..1.0).contains(&c.outsider_reputation) {
            return Err(ConfigError::new("consensus_compare.outsider_reputation", "must lie in [0, 1)"));
        }
        if c.mean_requests.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(ConfigError::new("consensus_compare.mean_requests", "must be finite and nonnegative"));
        }
        let w = self.tradeoff.weighted_sum;
        if !(0.0..=1.0).contains(&w) {
            return Err(ConfigError::new("tradeoff.weighted_sum", "must lie in [0, 1]"));
        }
        if !self.tradeoff.e_max.is_empty() && self.tradeoff.episode_eval_slots == 0 {
            return Err(ConfigError::new("tradeoff.episode_eval_slots", "must be positive"));
        }
        if self.tradeoff.e_max.iter().any(|&e| e.is_nan() || e < 0.0) {
            return Err(ConfigError::new("tradeoff.e_max", "bounds must be nonnegative"));
        }
        Ok(())
    }
}

/// Recursively overlays `over` onto `base`; tables merge, anything else
/// replaces.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
