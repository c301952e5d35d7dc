//! The experiment families, each writing CSV tables and a manifest into its
//! own output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::{Check, Manifest, RunDir};
use super::config::ScenarioConfig;
use super::stats::{linear_fit, mean, pearson, spearman};
use crate::drl::{
    evaluate_traced, load_warm_start, save_checkpoint, train_observed, Agent, Evaluation, RunMeta, Schedule,
    TrainMode, TrainOptions, TrainReport,
};
use crate::env::TraceRow;
use crate::error::{Error, Result};
use crate::ledger::{tamper_time, uniform_consensus_latency, Ledger};
use crate::network::{ControlEnv, MecNetwork};
use crate::reputation::{
    elect_committee, generate_feedback, miner_hit_probability, reputation_rows, select_miner,
    update_reputation, BaseStationProfile, MinerPolicy, ReputationConfig, ReputationRow,
};
use crate::substream;
use crate::workload::{default_arrival_cap, draw_slot_demand, WorkloadConfig};

/// Substream index of the final greedy evaluation of a training run.
const EVAL_STREAM: u64 = 1 << 40;
/// Substream offset of the miner-hit simulations.
const HIT_STREAM: u64 = 1 << 20;

/// Relative tolerance on cost bounds and convergence checks.
pub const COST_TOLERANCE: f64 = 0.1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------- reputation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub prior: f64,
    pub malicious_fraction: f64,
    pub feedback_mean: f64,
    /// Mean reputation over the second half of the run.
    pub reputation: f64,
}

/// Long-run reputation of one always-serving station whose feedback comes
/// from a Poisson number of users, a share of whom invert the truth.
pub fn steady_state_reputation(
    cfg: &ReputationConfig,
    fraction: f64,
    feedback_mean: f64,
    n_slots: u64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (feedback_mean > 0.0).then(|| Poisson::new(feedback_mean).expect("positive mean"));
    let mut profile = BaseStationProfile::new(0, cfg.history_window);
    let tail_start = n_slots / 2;
    let mut tail = Vec::with_capacity((n_slots - tail_start) as usize);
    for slot in 0..n_slots {
        let n = users.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let batch = generate_feedback(0, slot, true, n, fraction, cfg.truth_likelihood, &mut rng);
        let rep = update_reputation(&mut profile, Some(&batch), cfg)?;
        if slot >= tail_start {
            tail.push(rep);
        }
    }
    Ok(if tail.is_empty() { profile.reputation() } else { mean(&tail) })
}

/// Every (prior, fraction) point. Points sharing a fraction share a random
/// stream, so the prior curves differ only through the prior.
pub fn reputation_sweep(cfg: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
    let s = &cfg.reputation_sweep;
    let jobs: Vec<(f64, usize, f64)> = s
        .priors
        .iter()
        .flat_map(|&p| s.fractions.iter().enumerate().map(move |(i, &f)| (p, i, f)))
        .collect();
    jobs.par_iter()
        .map(|&(prior, i, fraction)| {
            let rep_cfg = ReputationConfig {
                prior_served: prior,
                ..cfg.reputation.clone()
            };
            let seed = substream(cfg.seed, i as u64);
            Ok(SweepPoint {
                prior,
                malicious_fraction: fraction,
                feedback_mean: s.feedback_mean,
                reputation: steady_state_reputation(&rep_cfg, fraction, s.feedback_mean, s.n_slots, seed)?,
            })
        })
        .collect()
}

pub fn reputation_checks(cfg: &ScenarioConfig, points: &[SweepPoint]) -> Vec<Check> {
    let s = &cfg.reputation_sweep;
    let mut checks = Vec::new();
    let curve = |prior: f64| -> Vec<&SweepPoint> { points.iter().filter(|p| p.prior == prior).collect() };

    let base = cfg.reputation.prior_served;
    let robust: Vec<&SweepPoint> = curve(base)
        .into_iter()
        .filter(|p| p.malicious_fraction <= s.robust_up_to + 1e-12)
        .collect();
    if !robust.is_empty() {
        let worst = robust.iter().copied().min_by(|a, b| a.reputation.total_cmp(&b.reputation)).unwrap();
        checks.push(Check::new(
            format!("reputation >= {} up to fraction {} (prior {base})", s.robust_min, s.robust_up_to),
            worst.reputation >= s.robust_min,
            format!("lowest {:.5} at fraction {}", worst.reputation, worst.malicious_fraction),
        ));
    }
    for &prior in &s.priors {
        let c = curve(prior);
        if c.len() < 2 {
            continue;
        }
        let f: Vec<f64> = c.iter().map(|p| p.malicious_fraction).collect();
        let r: Vec<f64> = c.iter().map(|p| p.reputation).collect();
        let rho = spearman(&f, &r);
        checks.push(Check::new(
            format!("reputation decreases with fraction (prior {prior})"),
            rho < s.max_spearman,
            format!("spearman {rho:.4}"),
        ));
    }
    let lo = s.priors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.priors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        let (low, high) = (curve(lo), curve(hi));
        let dominated = low
            .iter()
            .zip(&high)
            .filter(|(a, b)| b.reputation < a.reputation)
            .count();
        checks.push(Check::new(
            format!("prior {hi} curve dominates prior {lo}"),
            dominated == 0,
            format!("{dominated} fractions violate"),
        ));
    }
    checks
}

/// Per-slot reputation, committee and miner flags of the configured network
/// served at full rate.
pub fn reputation_trace(cfg: &ScenarioConfig) -> Result<Vec<ReputationRow>> {
    let mut net = MecNetwork::new(cfg.network_config(), cfg.seed)?;
    net.reset(cfg.seed);
    let mut rows = Vec::new();
    for _ in 0..cfg.reputation_sweep.trace_slots {
        net.step(1.0)?;
        let sel = net.last_selection().expect("a step always selects");
        rows.extend(reputation_rows(net.profiles(), sel));
    }
    Ok(rows)
}

pub fn run_reputation_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest> {
    let mut run = RunDir::create(out)?;
    let points = reputation_sweep(cfg)?;
    run.write_csv("reputation_sweep.csv", &points)?;
    run.write_csv("reputation_trace.csv", &reputation_trace(cfg)?)?;
    let checks = reputation_checks(cfg, &points);
    run.finish("reputation-sweep", cfg, None, checks)
}

// ----------------------------------------------------------------- consensus

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusPoint {
    pub mean_requests: f64,
    pub n_validators: usize,
    pub mean_body_size: f64,
    pub mean_block_size: f64,
    pub miner_cycles: f64,
    pub mean_tau_bc: f64,
    pub tamper_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitPoint {
    pub policy: String,
    pub slots: u64,
    pub mean_committee_size: f64,
    pub hit_probability: f64,
}

/// Block cost and tamper time for each mean request rate, with every
/// committee member serving at full capacity.
pub fn consensus_points(cfg: &ScenarioConfig) -> Result<Vec<ConsensusPoint>> {
    let c = &cfg.consensus_compare;
    let n_validators = c.committee_size - 1;
    let rate = cfg.env.capacity as f64;
    c.mean_requests
        .par_iter()
        .enumerate()
        .map(|(i, &lambda_bar)| {
            let workload = WorkloadConfig {
                lambda_bar,
                arrival_cap: default_arrival_cap(lambda_bar),
                ..cfg.workload.clone()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, i as u64));
            let (mut body, mut block, mut cycles, mut tau) = (0.0, 0.0, 0.0, 0.0);
            for slot in 0..c.n_slots {
                let d = draw_slot_demand(&workload, slot, &mut rng);
                let cost = uniform_consensus_latency(&cfg.consensus, d.block_size, rate, n_validators)?;
                body += d.body_size(&workload);
                block += d.block_size;
                cycles += cost.miner_cycles();
                tau += cost.tau_bc;
            }
            let n = c.n_slots.max(1) as f64;
            Ok(ConsensusPoint {
                mean_requests: lambda_bar,
                n_validators,
                mean_body_size: body / n,
                mean_block_size: block / n,
                miner_cycles: cycles / n,
                mean_tau_bc: tau / n,
                tamper_time: tamper_time(cfg.network.n_bs, tau / n),
            })
        })
        .collect()
}

/// Fraction of slots in which the highest-stake guess names the miner, over
/// a stationary committee of `committee_size` full-reputation stations.
pub fn miner_hits(cfg: &ScenarioConfig) -> Result<Vec<HitPoint>> {
    let c = &cfg.consensus_compare;
    let window = cfg.reputation.history_window;
    let profiles: Vec<BaseStationProfile> = (0..cfg.network.n_bs)
        .map(|id| {
            let r = if id < c.committee_size { 1.0 } else { c.outsider_reputation };
            BaseStationProfile::with_reputation(id, window, r)
        })
        .collect();
    [MinerPolicy::RposRandom, MinerPolicy::PosMaxStake]
        .par_iter()
        .enumerate()
        .map(|(i, &policy)| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, HIT_STREAM + i as u64));
            let mut history = Vec::with_capacity(c.n_slots as usize);
            for slot in 0..c.n_slots {
                let elected = elect_committee(&profiles, &cfg.reputation, slot)?;
                history.push(select_miner(elected, policy, &mut rng));
            }
            let sizes: Vec<f64> = history.iter().map(|s| s.size() as f64).collect();
            Ok(HitPoint {
                policy: policy.label().to_string(),
                slots: c.n_slots,
                mean_committee_size: if sizes.is_empty() { 0.0 } else { mean(&sizes) },
                hit_probability: miner_hit_probability(&history),
            })
        })
        .collect()
}

pub fn consensus_checks(cfg: &ScenarioConfig, points: &[ConsensusPoint], hits: &[HitPoint]) -> Vec<Check> {
    let mut checks = Vec::new();
    if points.len() >= 2 {
        let n_v = points[0].n_validators as f64;
        let expected = cfg.consensus.kappa_bc * (1.0 + n_v);
        let body: Vec<f64> = points.iter().map(|p| p.mean_body_size).collect();
        let cycles: Vec<f64> = points.iter().map(|p| p.miner_cycles).collect();
        let (slope, _) = linear_fit(&body, &cycles);
        let rel = (slope - expected).abs() / expected;
        checks.push(Check::new(
            "miner cycles grow linearly in body size",
            rel <= 1e-9,
            format!("slope {slope:.6e}, expected {expected:.6e}, relative error {rel:.2e}"),
        ));
        let tamper: Vec<f64> = points.iter().map(|p| p.tamper_time).collect();
        let r = pearson(&body, &tamper);
        checks.push(Check::new(
            "tamper time grows linearly in body size",
            r > 1.0 - 1e-9,
            format!("correlation {r:.12}"),
        ));
    }
    for h in hits {
        let (passed, detail) = match h.policy.as_str() {
            "pos" => (h.hit_probability == 1.0, format!("hit {}", h.hit_probability)),
            _ => {
                let expected = 1.0 / h.mean_committee_size;
                (
                    (h.hit_probability - expected).abs() <= 0.02,
                    format!("hit {:.4}, expected {expected:.4} +- 0.02", h.hit_probability),
                )
            }
        };
        checks.push(Check::new(format!("miner hit probability ({})", h.policy), passed, detail));
    }
    checks
}

pub fn run_consensus_comparison(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest> {
    let mut run = RunDir::create(out)?;
    let points = consensus_points(cfg)?;
    let hits = miner_hits(cfg)?;
    run.write_csv("consensus_costs.csv", &points)?;
    run.write_csv("miner_hits.csv", &hits)?;
    let checks = consensus_checks(cfg, &points, &hits);
    run.finish("consensus-compare", cfg, None, checks)
}

// ------------------------------------------------------------------ training

/// A trained agent with its log and final greedy evaluation.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub agent: Agent,
    pub report: TrainReport,
    pub evaluation: Evaluation,
    pub trace: Vec<TraceRow>,
}

/// Random weights seeded by `cfg.seed`, or the configured warm start.
pub fn initial_agent(cfg: &ScenarioConfig) -> Result<Agent> {
    match &cfg.training.warm_start {
        Some(path) => Ok(load_warm_start(path, &cfg.agent, cfg.agent.e_max)?),
        None => Ok(Agent::new(cfg.agent.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))),
    }
}

/// Trains `agent` under `cfg.training`, then evaluates it greedily.
pub fn train_agent(cfg: &ScenarioConfig, agent: Agent, dump_dir: Option<&Path>) -> Result<TrainingOutcome> {
    Ok(train_selecting(cfg, agent, dump_dir, None)?.0)
}

/// Like [`train_agent`], but keeps the end-of-episode policy with the lowest
/// evaluated latency among those whose evaluated cost is within `bound`;
/// the final policy if none is. Needs `training.episode_eval_slots > 0`.
/// Also returns the chosen episode.
pub fn train_best_feasible(
    cfg: &ScenarioConfig,
    agent: Agent,
    dump_dir: Option<&Path>,
    bound: f64,
) -> Result<(TrainingOutcome, Option<usize>)> {
    train_selecting(cfg, agent, dump_dir, Some(bound))
}

fn train_selecting(
    cfg: &ScenarioConfig,
    mut agent: Agent,
    dump_dir: Option<&Path>,
    bound: Option<f64>,
) -> Result<(TrainingOutcome, Option<usize>)> {
    let t = &cfg.training;
    let mut env = MecNetwork::new(cfg.network_config(), cfg.seed)?;
    let opts = TrainOptions {
        mode: t.mode,
        seed: cfg.seed,
        dump_dir: dump_dir.map(Path::to_path_buf),
        eval_slots: t.episode_eval_slots,
    };
    let schedule = Schedule {
        episodes: t.episodes,
        steps_per_episode: t.steps_per_episode,
    };
    let mut best: Option<(f64, usize, Agent)> = None;
    let report = train_observed(&mut env, &mut agent, schedule, &opts, |log, a| {
        let (Some(bound), Some(cost), Some(latency)) = (bound, log.eval_discounted_cost, log.eval_latency) else {
            return;
        };
        if cost <= bound && best.as_ref().is_none_or(|b| latency < b.0) {
            best = Some((latency, log.episode, a.clone()));
        }
    })?;
    let (agent, episode) = match best {
        Some((_, episode, a)) => (a, Some(episode)),
        None => (agent, None),
    };
    let (evaluation, trace) = evaluate_traced(&mut env, &agent, t.eval_slots, substream(cfg.seed, EVAL_STREAM))?;
    let outcome = TrainingOutcome {
        agent,
        report,
        evaluation,
        trace,
    };
    Ok((outcome, episode))
}

pub fn training_checks(cfg: &ScenarioConfig, o: &TrainingOutcome) -> Vec<Check> {
    let mut checks = vec![
        Check::new(
            "multiplier stays nonnegative",
            o.report.dual_violations == 0,
            format!("{} negative after {} updates", o.report.dual_violations, o.report.updates),
        ),
        Check::new(
            "capacity conserved every step",
            o.report.conservation_violations == 0,
            format!("{} violations in {} steps", o.report.conservation_violations, o.report.steps),
        ),
    ];
    if cfg.training.mode == TrainMode::Constrained && cfg.training.eval_slots > 0 {
        let bound = cfg.agent.e_max * (1.0 + COST_TOLERANCE);
        checks.push(Check::new(
            "evaluation cost within bound",
            o.evaluation.discounted_cost <= bound,
            format!("discounted cost {:.4}, bound {bound:.4}", o.evaluation.discounted_cost),
        ));
    }
    checks
}

pub fn run_training(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest> {
    let mut run = RunDir::create(out)?;
    let outcome = train_agent(cfg, initial_agent(cfg)?, Some(out))?;
    write_training(&mut run, cfg, &outcome, "")?;
    let checks = training_checks(cfg, &outcome);
    run.finish("train", cfg, None, checks)
}

fn write_training(run: &mut RunDir, cfg: &ScenarioConfig, o: &TrainingOutcome, prefix: &str) -> Result<PathBuf> {
    run.write_csv(&format!("{prefix}training_log.csv"), &o.report.log)?;
    run.write_csv(&format!("{prefix}eval_trace.csv"), &o.trace)?;
    run.write_json(&format!("{prefix}evaluation.json"), &o.evaluation)?;
    let name = format!("{prefix}checkpoint.json");
    let path = run.file(&name);
    let meta = RunMeta {
        seed: cfg.seed,
        episodes: cfg.training.episodes,
    };
    save_checkpoint(&o.agent, meta, &path)?;
    run.register(&name)?;
    Ok(path)
}

// ------------------------------------------------------------------ tradeoff

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub label: String,
    pub mode: String,
    pub e_max: f64,
    pub warm_started: bool,
    pub episodes: usize,
    /// Episode whose policy is reported; empty for the final policy.
    pub selected_episode: Option<usize>,
    pub discounted_cost: f64,
    pub mean_latency: f64,
    pub normalized_latency: f64,
    pub lambda_l: f64,
}

fn tradeoff_point(
    label: String,
    cfg: &ScenarioConfig,
    warm: bool,
    o: &TrainingOutcome,
    selected_episode: Option<usize>,
) -> TradeoffPoint {
    TradeoffPoint {
        label,
        mode: cfg.training.mode.label(),
        e_max: cfg.agent.e_max,
        warm_started: warm,
        episodes: cfg.training.episodes,
        selected_episode,
        discounted_cost: o.evaluation.discounted_cost,
        mean_latency: o.evaluation.mean_latency,
        normalized_latency: o.evaluation.normalized_latency,
        lambda_l: o.agent.lambda,
    }
}

pub fn tradeoff_checks(cfg: &ScenarioConfig, points: &[TradeoffPoint]) -> Vec<Check> {
    let t = &cfg.tradeoff;
    let mut checks = Vec::new();
    let mut chain: Vec<&TradeoffPoint> = points.iter().filter(|p| p.label.starts_with("e_max")).collect();
    for p in &chain {
        let bound = p.e_max * (1.0 + COST_TOLERANCE);
        checks.push(Check::new(
            format!("cost within bound at E_max {}", p.e_max),
            p.discounted_cost <= bound,
            format!("discounted cost {:.4}, bound {bound:.4}", p.discounted_cost),
        ));
    }
    chain.sort_by(|a, b| a.e_max.total_cmp(&b.e_max));
    if chain.len() >= 2 {
        let e: Vec<f64> = chain.iter().map(|p| p.e_max).collect();
        let lat: Vec<f64> = chain.iter().map(|p| p.mean_latency).collect();
        let rho = spearman(&e, &lat);
        let (tight, loose) = (lat[0], lat[lat.len() - 1]);
        checks.push(Check::new(
            "latency falls as E_max grows",
            rho <= t.max_latency_spearman && loose < tight,
            format!("spearman {rho:.3}; latency {tight:.3} at the tightest bound, {loose:.3} at the loosest"),
        ));
    }
    let find = |label: &str| points.iter().find(|p| p.label == label);
    if let (Some(inf), Some(lat)) = (find("unbounded"), find("min_latency")) {
        let gap = (inf.mean_latency - lat.mean_latency).abs() / lat.mean_latency.max(inf.mean_latency);
        checks.push(Check::new(
            "unbounded run matches latency-only run",
            gap <= t.unbounded_slack,
            format!("latencies {:.4} vs {:.4}", inf.mean_latency, lat.mean_latency),
        ));
    }
    checks
}

/// Trains the bounds of `tradeoff.e_max` in order, each from the previous
/// point's checkpoint, plus cold fixed-weight, unbounded and latency-only
/// baselines. A bound's point is its best feasible end-of-episode policy.
pub fn tradeoff_sweep(cfg: &ScenarioConfig, run: &mut RunDir) -> Result<Vec<TradeoffPoint>> {
    let t = &cfg.tradeoff;
    let mut points = Vec::new();
    let mut previous: Option<PathBuf> = None;
    for (i, &e_max) in t.e_max.iter().enumerate() {
        let mut c = cfg.clone();
        c.agent.e_max = e_max;
        c.training.mode = TrainMode::Constrained;
        c.training.episodes = if previous.is_some() { t.chain_episodes } else { t.first_episodes };
        c.training.warm_start = previous.clone();
        c.training.episode_eval_slots = t.episode_eval_slots;
        let (o, chosen) = train_best_feasible(&c, initial_agent(&c)?, Some(run.path()), e_max)?;
        let path = write_training(run, &c, &o, &format!("point{i}_"))?;
        points.push(tradeoff_point(format!("e_max_{e_max}"), &c, previous.is_some(), &o, chosen));
        previous = Some(path);
    }

    let baseline = |label: &str, mode: TrainMode, e_max: f64| {
        let mut c = cfg.clone();
        c.agent.e_max = e_max;
        c.training.mode = mode;
        c.training.episodes = t.first_episodes;
        c.training.warm_start = None;
        (label.to_string(), c)
    };
    let baselines = [
        baseline("weighted_sum", TrainMode::WeightedSum(t.weighted_sum), cfg.agent.e_max),
        baseline("unbounded", TrainMode::Constrained, f64::INFINITY),
        baseline("min_latency", TrainMode::MinLatency, cfg.agent.e_max),
    ];
    let trained: Vec<Result<TradeoffPoint>> = baselines
        .par_iter()
        .map(|(label, c)| {
            let o = train_agent(c, initial_agent(c)?, None)?;
            Ok(tradeoff_point(label.clone(), c, false, &o, None))
        })
        .collect();
    for p in trained {
        points.push(p?);
    }
    Ok(points)
}

pub fn run_tradeoff_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest> {
    let mut run = RunDir::create(out)?;
    let points = tradeoff_sweep(cfg, &mut run)?;
    run.write_csv("tradeoff.csv", &points)?;
    let checks = tradeoff_checks(cfg, &points);
    run.finish("tradeoff", cfg, None, checks)
}

// -------------------------------------------------------------------- ledger

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub blocks: usize,
    pub valid: bool,
    pub violation_index: Option<usize>,
    pub violation: String,
}

/// Reads and checks an NDJSON ledger dump; malformed input is reported as
/// an invalid chain.
pub fn verify_ledger_dump(path: &Path) -> Result<LedgerReport> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(match Ledger::import_ndjson(BufReader::new(file)) {
        Err(e) => LedgerReport {
            blocks: 0,
            valid: false,
            violation_index: None,
            violation: e.to_string(),
        },
        Ok(ledger) => report_of(&ledger),
    })
}

fn report_of(ledger: &Ledger) -> LedgerReport {
    match ledger.verify_chain() {
        Ok(()) => LedgerReport {
            blocks: ledger.len(),
            valid: true,
            violation_index: None,
            violation: String::new(),
        },
        Err(v) => LedgerReport {
            blocks: ledger.len(),
            valid: false,
            violation_index: Some(v.index),
            violation: format!("{:?}", v.kind),
        },
    }
}

/// Chain of `cfg.n_slots` blocks from the configured network at full rate.
pub fn simulate_ledger(cfg: &ScenarioConfig) -> Result<Ledger> {
    let mut net_cfg = cfg.network_config();
    net_cfg.keep_ledger = true;
    let mut net = MecNetwork::new(net_cfg, cfg.seed)?;
    net.reset(cfg.seed);
    for _ in 0..cfg.n_slots {
        net.step(1.0)?;
    }
    Ok(net.ledger().clone())
}

/// Verifies `input`, or simulates a chain, dumps it and verifies the dump.
pub fn run_verify_ledger(cfg: &ScenarioConfig, input: Option<&Path>, out: &Path) -> Result<Manifest> {
    let mut run = RunDir::create(out)?;
    let dump = match input {
        Some(path) => path.to_path_buf(),
        None => {
            let ledger = simulate_ledger(cfg)?;
            let path = run.file("ledger.ndjson");
            let file = File::create(&path).map_err(io_err(&path))?;
            ledger.export_ndjson(BufWriter::new(file))?;
            run.register("ledger.ndjson")?;
            path
        }
    };
    let report = verify_ledger_dump(&dump)?;
    run.write_csv("ledger_verification.csv", std::slice::from_ref(&report))?;
    let check = Check::new(
        "ledger hash chain intact",
        report.valid,
        if report.valid {
            format!("{} blocks", report.blocks)
        } else {
            format!("{} at block {:?}", report.violation, report.violation_index)
        },
    );
    run.finish("verify-ledger", cfg, input.map(Path::to_path_buf), vec![check])
}

// -------------------------------------------------------------------- replay

/// Reruns the scenario a manifest describes into `out` and compares every
/// output digest with the recorded one.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<Manifest> {
    let recorded = Manifest::load(manifest_path)?;
    let source_dir = manifest_path.parent().unwrap_or(Path::new("."));
    if same_dir(source_dir, out) {
        return Err(Error::Replay("replay output must not overwrite the recorded run".into()));
    }
    let fresh = run_verb(&recorded.verb, &recorded.config, recorded.input.as_deref(), out)?;
    let mut diffs = Vec::new();
    for (name, digest) in &recorded.outputs {
        match fresh.outputs.get(name) {
            Some(d) if d == digest => {}
            Some(_) => diffs.push(format!("{name} differs")),
            None => diffs.push(format!("{name} missing")),
        }
    }
    diffs.extend(
        fresh
            .outputs
            .keys()
            .filter(|k| !recorded.outputs.contains_key(*k))
            .map(|k| format!("{k} unexpected")),
    );
    if diffs.is_empty() {
        Ok(fresh)
    } else {
        Err(Error::Replay(diffs.join("; ")))
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Dispatches a CLI verb.
pub fn run_verb(verb: &str, cfg: &ScenarioConfig, input: Option<&Path>, out: &Path) -> Result<Manifest> {
    match verb {
        "reputation-sweep" => run_reputation_sweep(cfg, out),
        "consensus-compare" => run_consensus_comparison(cfg, out),
        "train" => run_training(cfg, out),
        "tradeoff" => run_tradeoff_sweep(cfg, out),
        "verify-ledger" => run_verify_ledger(cfg, input, out),
        other => Err(Error::Replay(format!("unknown verb `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.reputation_sweep.fractions = vec![0.0, 0.3, 0.6, 0.9];
        cfg.reputation_sweep.n_slots = 200;
        cfg.reputation_sweep.trace_slots = 20;
        cfg.consensus_compare.n_slots = 200;
        cfg.n_slots = 50;
        cfg
    }

    #[test]
    fn honest_feedback_keeps_full_reputation() {
        let cfg = ReputationConfig::default();
        let r = steady_state_reputation(&cfg, 0.0, 100.0, 400, 3).unwrap();
        assert!(r > 0.999, "{r}");
        let none = steady_state_reputation(&cfg, 0.0, 0.0, 50, 3).unwrap();
        assert_eq!(none, 1.0);
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let cfg = quick();
        let a = reputation_sweep(&cfg).unwrap();
        assert_eq!(a, reputation_sweep(&cfg).unwrap());
        assert_eq!(a.len(), 12);
        let checks = reputation_checks(&cfg, &a);
        let get = |name: &str| checks.iter().find(|c| c.name.contains(name)).unwrap();
        assert!(get("dominates").passed, "{:?}", get("dominates"));
        assert!(get("prior 0.8)").passed);
    }

    #[test]
    fn consensus_checks_pass() {
        let cfg = quick();
        let points = consensus_points(&cfg).unwrap();
        let hits = miner_hits(&cfg).unwrap();
        assert_eq!(hits[0].mean_committee_size, 5.0);
        let checks = consensus_checks(&cfg, &points, &hits);
        // 200 slots are too few for the +-0.02 band, so only the exact ones.
        for c in checks.iter().filter(|c| !c.name.contains("rpos")) {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn ledger_round_trip_and_tamper() {
        let cfg = quick();
        let dir = tempfile::tempdir().unwrap();
        let m = run_verify_ledger(&cfg, None, dir.path()).unwrap();
        assert!(m.passed(), "{:?}", m.checks);
        let dump = dir.path().join("ledger.ndjson");
        let text = std::fs::read_to_string(&dump).unwrap();
        assert_eq!(text.lines().count(), 51);

        let mut ledger = Ledger::import_ndjson(text.as_bytes()).unwrap();
        ledger.blocks_mut()[7].body[0] ^= 1;
        let bad = dir.path().join("bad.ndjson");
        ledger.export_ndjson(File::create(&bad).unwrap()).unwrap();
        let r = verify_ledger_dump(&bad).unwrap();
        assert!(!r.valid);
        assert_eq!(r.violation_index, Some(7));

        std::fs::write(&bad, "{oops").unwrap();
        assert!(!verify_ledger_dump(&bad).unwrap().valid);
    }

    #[test]
    fn replay_reproduces_and_refuses_to_overwrite() {
        let cfg = quick();
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first");
        run_reputation_sweep(&cfg, &first).unwrap();
        let manifest = first.join(super::super::artifact::MANIFEST_FILE);
        let again = replay(&manifest, &dir.path().join("again")).unwrap();
        assert_eq!(again.outputs, Manifest::load(&manifest).unwrap().outputs);
        assert!(matches!(replay(&manifest, &first), Err(Error::Replay(_))));

        std::fs::write(first.join("reputation_sweep.csv"), "x").unwrap();
        let mut m = Manifest::load(&manifest).unwrap();
        m.outputs.insert("reputation_sweep.csv".into(), "00".into());
        std::fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(replay(&manifest, &dir.path().join("third")), Err(Error::Replay(_))));
    }

    #[test]
    fn short_training_run_writes_artifacts() {
        let mut cfg = ScenarioConfig::default();
        cfg.agent.hidden = vec![8, 8];
        cfg.agent.warmup = 100;
        cfg.training.episodes = 2;
        cfg.training.steps_per_episode = 200;
        cfg.training.eval_slots = 300;
        let dir = tempfile::tempdir().unwrap();
        let m = run_training(&cfg, dir.path()).unwrap();
        for f in ["training_log.csv", "eval_trace.csv", "evaluation.json", "checkpoint.json"] {
            assert!(m.outputs.contains_key(f), "{f}");
        }
        assert_eq!(m.checks.len(), 3);
        assert!(m.checks[..2].iter().all(|c| c.passed));
        let log = std::fs::read_to_string(dir.path().join("training_log.csv")).unwrap();
        assert!(log.starts_with("episode,mean_reward,mean_cost,discounted_cost,lambda_L"));
        assert_eq!(log.lines().count(), 3);
    }
}
