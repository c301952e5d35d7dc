use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, TrainMode};
use super::checkpoint::{save_checkpoint, RunMeta};
use super::replay::{ReplayBuffer, Transition};
use crate::env::{SlotOutcome, TraceRow};
use crate::error::{DrlError, Error, Result};
use crate::network::ControlEnv;
use crate::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub episodes: usize,
    pub steps_per_episode: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub mode: TrainMode,
    pub seed: u64,
    /// Where a checkpoint is dumped if training diverges.
    pub dump_dir: Option<PathBuf>,
    /// Greedy evaluation slots after each episode (0 disables it).
    pub eval_slots: usize,
}

/// One row of the training log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_cost: f64,
    /// `mean_cost / (1 - gamma_c)`.
    pub discounted_cost: f64,
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    /// Discounted cost of the greedy policy after the episode.
    pub eval_discounted_cost: Option<f64>,
    /// Normalized latency of the greedy policy after the episode.
    pub eval_latency: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<EpisodeLog>,
    pub steps: u64,
    pub updates: u64,
    /// Updates after which the multiplier was negative.
    pub dual_violations: u64,
    /// Steps after which `sum(rates) + f_a != F`.
    pub conservation_violations: u64,
}

impl TrainReport {
    /// First episode that opens a run of `window` consecutive episodes with
    /// discounted cost within `bound`; uses the greedy evaluation when it was
    /// run. `None` if no such run exists.
    pub fn episodes_to_satisfy(&self, bound: f64, window: usize) -> Option<usize> {
        let window = window.max(1);
        let mut run = 0;
        for (i, e) in self.log.iter().enumerate() {
            if e.eval_discounted_cost.unwrap_or(e.discounted_cost) <= bound {
                run += 1;
                if run == window {
                    return Some(self.log[i + 1 - window].episode);
                }
            } else {
                run = 0;
            }
        }
        None
    }
}

/// Runs the primal-dual actor-critic loop: act with exploration noise,
/// store the transition, and once the buffer holds a mini-batch update the
/// critics, the actor, the multiplier and the targets every step.
pub fn train<E: ControlEnv>(
    env: &mut E,
    agent: &mut Agent,
    schedule: Schedule,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    train_observed(env, agent, schedule, opts, |_, _| {})
}

/// [`train`] that hands every finished episode's log row and agent to
/// `observe`.
pub fn train_observed<E: ControlEnv>(
    env: &mut E,
    agent: &mut Agent,
    schedule: Schedule,
    opts: &TrainOptions,
    mut observe: impl FnMut(&EpisodeLog, &Agent),
) -> Result<TrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream(opts.seed, u64::MAX));
    let mut buffer = ReplayBuffer::new(agent.cfg.buffer_capacity);
    let mut report = TrainReport::default();
    let gamma_c = agent.cfg.gamma_c;

    for episode in 0..schedule.episodes {
        let mut s = env.reset(substream(opts.seed, episode as u64));
        let mut noise = agent.noise(episode);
        let (mut reward_sum, mut cost_sum) = (0.0, 0.0);

        for step in 0..schedule.steps_per_episode {
            let u = agent.act_explore(s, &mut noise, &mut rng);
            let out = env.step(u)?;
            let s_next = env.observe();
            if !env.capacity_conserved() {
                report.conservation_violations += 1;
            }
            let t = Transition {
                s,
                u,
                r: out.reward,
                c: f64::from(out.cost),
                s_next,
            };
            if !t.is_finite() {
                return Err(DrlError::NonFinite {
                    what: "transition".into(),
                    episode,
                    step,
                }
                .into());
            }
            buffer.push(t);
            reward_sum += out.reward;
            cost_sum += f64::from(out.cost);
            report.steps += 1;
            s = s_next;

            if buffer.len() >= agent.cfg.batch_size.max(agent.cfg.warmup) {
                let batch = buffer.sample(agent.cfg.batch_size, &mut rng)?;
                let result = agent.update(&batch, opts.mode);
                if result.is_err() || !agent.is_finite() {
                    let what = match result {
                        Err(DrlError::NonFinite { what, .. }) => what,
                        _ => "network parameters".into(),
                    };
                    return Err(diverged(agent, opts, episode, step, what));
                }
                report.updates += 1;
                if agent.lambda < 0.0 {
                    report.dual_violations += 1;
                }
            }
        }

        let n = schedule.steps_per_episode.max(1) as f64;
        let mean_cost = cost_sum / n;
        let eval = if opts.eval_slots > 0 {
            let seed = substream(opts.seed, (1 << 32) + episode as u64);
            Some(evaluate(env, agent, opts.eval_slots, seed)?)
        } else {
            None
        };
        report.log.push(EpisodeLog {
            episode,
            mean_reward: reward_sum / n,
            mean_cost,
            discounted_cost: mean_cost / (1.0 - gamma_c),
            lambda_l: agent.lambda,
            eval_discounted_cost: eval.map(|e| e.discounted_cost),
            eval_latency: eval.map(|e| e.normalized_latency),
        });
        observe(report.log.last().expect("just pushed"), agent);
    }
    Ok(report)
}

fn diverged(agent: &Agent, opts: &TrainOptions, episode: usize, step: usize, what: String) -> Error {
    let dump = opts.dump_dir.as_ref().and_then(|dir| {
        let path = dir.join(format!("diverged_ep{episode}_step{step}.json"));
        let meta = RunMeta {
            seed: opts.seed,
            episodes: episode,
        };
        save_checkpoint(agent, meta, &path).ok().map(|_| path)
    });
    eprintln!("non-finite {what} at episode {episode}, step {step}");
    DrlError::Diverged { episode, dump }.into()
}

/// Greedy-policy performance over one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub slots: usize,
    pub served: usize,
    pub mean_cost: f64,
    /// `mean_cost / (1 - gamma_c)`.
    pub discounted_cost: f64,
    /// Mean latency in slots over served slots (0 if none).
    pub mean_latency: f64,
    /// Mean `tau / tau_max` over served slots; 1 if nothing was served.
    pub normalized_latency: f64,
}

pub fn evaluate<E: ControlEnv>(env: &mut E, agent: &Agent, slots: usize, seed: u64) -> Result<Evaluation> {
    rollout(env, agent, slots, seed, |_| {})
}

/// Like [`evaluate`], also returning every slot's trace row.
pub fn evaluate_traced<E: ControlEnv>(
    env: &mut E,
    agent: &Agent,
    slots: usize,
    seed: u64,
) -> Result<(Evaluation, Vec<TraceRow>)> {
    let mut trace = Vec::with_capacity(slots);
    let eval = rollout(env, agent, slots, seed, |out| trace.push(TraceRow::from(out)))?;
    Ok((eval, trace))
}

fn rollout<E: ControlEnv>(
    env: &mut E,
    agent: &Agent,
    slots: usize,
    seed: u64,
    mut record: impl FnMut(&SlotOutcome),
) -> Result<Evaluation> {
    let mut s = env.reset(seed);
    let (mut cost, mut served, mut latency, mut norm) = (0.0, 0usize, 0.0, 0.0);
    for _ in 0..slots {
        let out = env.step(agent.act(s))?;
        s = env.observe();
        record(&out);
        cost += f64::from(out.cost);
        if let Some(tau) = out.tau_total {
            served += 1;
            latency += tau;
            norm += -out.reward;
        }
    }
    let mean_cost = cost / slots.max(1) as f64;
    Ok(Evaluation {
        slots,
        served,
        mean_cost,
        discounted_cost: mean_cost / (1.0 - agent.cfg.gamma_c),
        mean_latency: if served > 0 { latency / served as f64 } else { 0.0 },
        normalized_latency: if served > 0 { norm / served as f64 } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::agent::AgentConfig;
    use crate::network::{MecNetwork, NetworkConfig};

    fn small() -> (MecNetwork, Agent) {
        let env = MecNetwork::new(NetworkConfig::default(), 0).unwrap();
        let cfg = AgentConfig {
            hidden: vec![8, 8],
            batch_size: 16,
            buffer_capacity: 1000,
            warmup: 16,
            ..Default::default()
        };
        let agent = Agent::new(cfg, &mut ChaCha8Rng::seed_from_u64(0));
        (env, agent)
    }

    fn opts(mode: TrainMode) -> TrainOptions {
        TrainOptions {
            mode,
            seed: 5,
            dump_dir: None,
            eval_slots: 0,
        }
    }

    #[test]
    fn zero_episodes_leave_agent_unchanged() {
        let (mut env, mut agent) = small();
        let before = agent.clone();
        let sched = Schedule {
            episodes: 0,
            steps_per_episode: 100,
        };
        let rep = train(&mut env, &mut agent, sched, &opts(TrainMode::Constrained)).unwrap();
        assert!(rep.log.is_empty());
        assert_eq!(agent, before);
    }

    #[test]
    fn training_is_deterministic_and_clean() {
        let sched = Schedule {
            episodes: 2,
            steps_per_episode: 200,
        };
        let (mut e1, mut a1) = small();
        let (mut e2, mut a2) = small();
        let r1 = train(&mut e1, &mut a1, sched, &opts(TrainMode::Constrained)).unwrap();
        let r2 = train(&mut e2, &mut a2, sched, &opts(TrainMode::Constrained)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(a1, a2);
        assert_eq!(r1.dual_violations, 0);
        assert_eq!(r1.conservation_violations, 0);
        assert_eq!(r1.updates, 400 - 15);
    }

    #[test]
    fn episodes_to_satisfy_needs_a_clean_run() {
        let log = |costs: &[f64]| TrainReport {
            log: costs
                .iter()
                .enumerate()
                .map(|(episode, &c)| EpisodeLog {
                    episode,
                    mean_reward: 0.0,
                    mean_cost: 0.0,
                    discounted_cost: c,
                    lambda_l: 0.0,
                    eval_discounted_cost: None,
                    eval_latency: None,
                })
                .collect(),
            ..Default::default()
        };
        assert_eq!(log(&[2.0, 0.3, 0.9, 0.3, 0.2]).episodes_to_satisfy(0.4, 2), Some(3));
        assert_eq!(log(&[2.0, 0.3, 0.9, 0.3, 0.2, 0.9]).episodes_to_satisfy(0.4, 2), Some(3));
        assert_eq!(log(&[0.3, 0.9]).episodes_to_satisfy(0.4, 2), None);
        assert_eq!(log(&[0.1]).episodes_to_satisfy(0.4, 1), Some(0));
    }

    #[test]
    fn evaluation_of_denying_policy() {
        let (mut env, mut agent) = small();
        // Output pinned near zero: every slot is a denial.
        let p = agent.actor.params_mut();
        p.iter_mut().for_each(|v| *v = 0.0);
        *p.last_mut().unwrap() = -50.0;
        let ev = evaluate(&mut env, &agent, 100, 1).unwrap();
        assert_eq!(ev.served, 0);
        assert_eq!(ev.mean_cost, 1.0);
        assert_eq!(ev.normalized_latency, 1.0);
        assert!((ev.discounted_cost - 20.0).abs() < 1e-9);
        let (again, trace) = evaluate_traced(&mut env, &agent, 100, 1).unwrap();
        assert_eq!(again, ev);
        assert_eq!(trace.len(), 100);
        assert!(trace.iter().all(|r| r.a == 0 && r.c == 1));
    }
}
