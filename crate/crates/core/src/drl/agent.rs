use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, OutputActivation};
use super::noise::{OuConfig, OuNoise};
use super::optim::{Optimizer, OptimizerKind};
use super::replay::Transition;
use crate::error::{ConfigError, DrlError};

/// What the actor maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// `Q_R - lambda * Q_C` with dual ascent on `lambda`.
    #[default]
    Constrained,
    /// `Q_R` only; the multiplier stays at zero.
    MinLatency,
    /// `-Q_C` only.
    MinDos,
    /// `w * Q_R - (1 - w) * Q_C` with fixed `w`.
    WeightedSum(f64),
}

impl TrainMode {
    pub fn label(self) -> String {
        match self {
            TrainMode::Constrained => "constrained".into(),
            TrainMode::MinLatency => "min_latency".into(),
            TrainMode::MinDos => "min_dos".into(),
            TrainMode::WeightedSum(w) => format!("weighted_sum_{w}"),
        }
    }

    /// Weights on `(Q_R, Q_C)` in the actor objective.
    pub fn weights(self, lambda: f64) -> (f64, f64) {
        match self {
            TrainMode::Constrained => (1.0, lambda),
            TrainMode::MinLatency => (1.0, 0.0),
            TrainMode::MinDos => (0.0, 1.0),
            TrainMode::WeightedSum(w) => (w, 1.0 - w),
        }
    }

    pub fn updates_dual(self) -> bool {
        matches!(self, TrainMode::Constrained)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Hidden layer widths shared by the actor and both critics.
    pub hidden: Vec<usize>,
    pub lr_reward_critic: f64,
    pub lr_cost_critic: f64,
    pub lr_actor: f64,
    pub lr_dual: f64,
    /// Target network tracking rate.
    pub phi: f64,
    pub gamma_r: f64,
    pub gamma_c: f64,
    /// Bound on the long-term discounted cost.
    pub e_max: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions stored before the first update (never fewer than a batch).
    pub warmup: usize,
    pub optimizer: OptimizerKind,
    pub lambda_init: f64,
    pub noise: OuConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr_reward_critic: 5e-4,
            lr_cost_critic: 5e-4,
            lr_actor: 2e-4,
            lr_dual: 0.1,
            phi: 5e-3,
            gamma_r: 0.95,
            gamma_c: 0.95,
            e_max: 0.4,
            batch_size: 512,
            buffer_capacity: 200_000,
            warmup: 512,
            optimizer: OptimizerKind::Sgd,
            lambda_init: 0.0,
            noise: OuConfig::default(),
        }
    }
}

impl AgentConfig {
    /// Small networks and rates tuned for the reduced desk workload, whose
    /// normalized rewards are about a hundred times smaller than the costs.
    pub fn desk() -> Self {
        Self {
            hidden: vec![32, 32],
            lr_reward_critic: 5e-2,
            lr_cost_critic: 5e-2,
            lr_actor: 2e-2,
            lr_dual: 1e-4,
            batch_size: 64,
            warmup: 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ConfigError::new("agent.hidden", "need at least one nonzero hidden width"));
        }
        for (field, v) in [
            ("agent.lr_reward_critic", self.lr_reward_critic),
            ("agent.lr_cost_critic", self.lr_cost_critic),
            ("agent.lr_actor", self.lr_actor),
            ("agent.lr_dual", self.lr_dual),
            ("agent.lambda_init", self.lambda_init),
            ("agent.e_max", self.e_max),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(ConfigError::new(field, format!("must be nonnegative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(ConfigError::new("agent.phi", "must lie in [0, 1]"));
        }
        for (field, g) in [("agent.gamma_r", self.gamma_r), ("agent.gamma_c", self.gamma_c)] {
            if !(0.0..1.0).contains(&g) {
                return Err(ConfigError::new(field, "must lie in [0, 1)"));
            }
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(ConfigError::new("agent.batch_size", "need 0 < batch_size <= buffer_capacity"));
        }
        Ok(())
    }

    pub fn actor_widths(&self) -> Vec<usize> {
        [&[2][..], &self.hidden, &[1]].concat()
    }

    pub fn critic_widths(&self) -> Vec<usize> {
        [&[3][..], &self.hidden, &[1]].concat()
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss_r: f64,
    pub loss_c: f64,
    pub objective: f64,
    /// `mean Q_C(s, mu(s)) - E_max` before the actor step.
    pub dual_gradient: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub actor: DenseNet,
    pub critic_r: DenseNet,
    pub critic_c: DenseNet,
    pub actor_target: DenseNet,
    pub critic_r_target: DenseNet,
    pub critic_c_target: DenseNet,
    pub lambda: f64,
    opt_actor: Optimizer,
    opt_r: Optimizer,
    opt_c: Optimizer,
}

fn flat_states(batch: &[Transition], next: bool) -> Vec<f64> {
    batch
        .iter()
        .flat_map(|t| if next { t.s_next } else { t.s })
        .collect()
}

fn critic_inputs(states: &[f64], actions: &[f64]) -> Vec<f64> {
    states
        .chunks_exact(2)
        .zip(actions)
        .flat_map(|(s, &u)| [s[0], s[1], u])
        .collect()
}

/// Mean squared error of `net` against `targets` and its parameter gradient.
pub fn critic_loss_grad(net: &DenseNet, inputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let m = targets.len();
    let tape = net.forward(inputs, m);
    let q = tape.output();
    let mut loss = 0.0;
    let d_out: Vec<f64> = q
        .iter()
        .zip(targets)
        .map(|(q, y)| {
            let e = q - y;
            loss += e * e;
            2.0 * e / m as f64
        })
        .collect();
    let mut grad = vec![0.0; net.num_params()];
    net.backward(&tape, &d_out, &mut grad, None);
    (loss / m as f64, grad)
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, rng: &mut R) -> Self {
        let actor = DenseNet::new(&cfg.actor_widths(), OutputActivation::Sigmoid, rng);
        let critic_r = DenseNet::new(&cfg.critic_widths(), OutputActivation::Linear, rng);
        let critic_c = DenseNet::new(&cfg.critic_widths(), OutputActivation::Linear, rng);
        Self::from_nets(cfg, actor, critic_r, critic_c)
    }

    /// Online networks given; targets start as copies, optimizers fresh.
    pub fn from_nets(cfg: AgentConfig, actor: DenseNet, critic_r: DenseNet, critic_c: DenseNet) -> Self {
        Self {
            opt_actor: Optimizer::new(cfg.optimizer, cfg.lr_actor, actor.num_params()),
            opt_r: Optimizer::new(cfg.optimizer, cfg.lr_reward_critic, critic_r.num_params()),
            opt_c: Optimizer::new(cfg.optimizer, cfg.lr_cost_critic, critic_c.num_params()),
            actor_target: actor.clone(),
            critic_r_target: critic_r.clone(),
            critic_c_target: critic_c.clone(),
            lambda: cfg.lambda_init.max(0.0),
            actor,
            critic_r,
            critic_c,
            cfg,
        }
    }

    pub fn noise(&self, episode: usize) -> OuNoise {
        let n = &self.cfg.noise;
        OuNoise::new(n.theta, n.mu, n.sigma_at(episode))
    }

    /// Deterministic policy output.
    pub fn act(&self, s: [f64; 2]) -> f64 {
        self.actor.predict(&s)[0]
    }

    /// Policy output plus exploration noise, clamped to `[0, 1]`.
    pub fn act_explore<R: Rng + ?Sized>(&self, s: [f64; 2], noise: &mut OuNoise, rng: &mut R) -> f64 {
        (self.act(s) + noise.sample(rng)).clamp(0.0, 1.0)
    }

    pub fn q_values(&self, s: [f64; 2], u: f64) -> (f64, f64) {
        let x = [s[0], s[1], u];
        (self.critic_r.predict(&x)[0], self.critic_c.predict(&x)[0])
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.is_finite()
            && [
                &self.actor,
                &self.critic_r,
                &self.critic_c,
                &self.actor_target,
                &self.critic_r_target,
                &self.critic_c_target,
            ]
            .iter()
            .all(|n| n.is_finite())
    }

    /// Bootstrapped targets from the target networks; the task never ends,
    /// so nothing is masked.
    pub fn td_targets(&self, batch: &[Transition]) -> (Vec<f64>, Vec<f64>) {
        let m = batch.len();
        let next = flat_states(batch, true);
        let u_next = self.actor_target.forward(&next, m).output().to_vec();
        let x = critic_inputs(&next, &u_next);
        let q_r = self.critic_r_target.forward(&x, m);
        let q_c = self.critic_c_target.forward(&x, m);
        let y_r = batch
            .iter()
            .zip(q_r.output())
            .map(|(t, q)| t.r + self.cfg.gamma_r * q)
            .collect();
        let y_c = batch
            .iter()
            .zip(q_c.output())
            .map(|(t, q)| t.c + self.cfg.gamma_c * q)
            .collect();
        (y_r, y_c)
    }

    /// One descent step on each critic's squared TD error; returns both
    /// losses measured before the step.
    pub fn critic_update(&mut self, batch: &[Transition]) -> Result<(f64, f64), DrlError> {
        let (y_r, y_c) = self.td_targets(batch);
        let x = critic_inputs(
            &flat_states(batch, false),
            &batch.iter().map(|t| t.u).collect::<Vec<_>>(),
        );
        let (loss_r, grad_r) = critic_loss_grad(&self.critic_r, &x, &y_r);
        let (loss_c, grad_c) = critic_loss_grad(&self.critic_c, &x, &y_c);
        for (what, v) in [("reward critic loss", loss_r), ("cost critic loss", loss_c)] {
            if !v.is_finite() {
                return Err(DrlError::NonFinite {
                    what: what.into(),
                    episode: 0,
                    step: 0,
                });
            }
        }
        self.opt_r.descend(self.critic_r.params_mut(), &grad_r);
        self.opt_c.descend(self.critic_c.params_mut(), &grad_c);
        Ok((loss_r, loss_c))
    }

    /// `J = mean(w_r Q_R(s, mu(s)) - w_c Q_C(s, mu(s)))`, its gradient with
    /// respect to the actor parameters, and `mean Q_C(s, mu(s))`.
    pub fn actor_objective_grad(&self, states: &[f64], w_r: f64, w_c: f64) -> (f64, Vec<f64>, f64) {
        let m = states.len() / 2;
        let tape_a = self.actor.forward(states, m);
        let x = critic_inputs(states, tape_a.output());
        let tape_r = self.critic_r.forward(&x, m);
        let tape_c = self.critic_c.forward(&x, m);
        let mean_qc = tape_c.output().iter().sum::<f64>() / m as f64;
        let objective = tape_r
            .output()
            .iter()
            .zip(tape_c.output())
            .map(|(r, c)| w_r * r - w_c * c)
            .sum::<f64>()
            / m as f64;

        let mut du = vec![0.0; m];
        let mut scratch_r = vec![0.0; self.critic_r.num_params()];
        let mut scratch_c = vec![0.0; self.critic_c.num_params()];
        let mut dx = vec![0.0; 3 * m];
        for (w, net, tape, scratch) in [
            (w_r, &self.critic_r, &tape_r, &mut scratch_r),
            (-w_c, &self.critic_c, &tape_c, &mut scratch_c),
        ] {
            if w == 0.0 {
                continue;
            }
            net.backward(tape, &vec![w / m as f64; m], scratch, Some(&mut dx));
            for (d, row) in du.iter_mut().zip(dx.chunks_exact(3)) {
                *d += row[2];
            }
        }
        let mut grad = vec![0.0; self.actor.num_params()];
        self.actor.backward(&tape_a, &du, &mut grad, None);
        (objective, grad, mean_qc)
    }

    /// `mean Q_R - lambda * (mean Q_C - E_max)` at the current policy.
    pub fn lagrangian(&self, states: &[f64]) -> f64 {
        let m = states.len() / 2;
        let u = self.actor.forward(states, m).output().to_vec();
        let x = critic_inputs(states, &u);
        let mean = |net: &DenseNet| net.forward(&x, m).output().iter().sum::<f64>() / m as f64;
        mean(&self.critic_r) - self.lambda * (mean(&self.critic_c) - self.cfg.e_max)
    }

    /// Derivative of the Lagrangian's constraint term with respect to
    /// `lambda` (sign flipped): `mean Q_C(s, mu(s)) - E_max`.
    pub fn dual_gradient(&self, states: &[f64]) -> f64 {
        let m = states.len() / 2;
        let u = self.actor.forward(states, m).output().to_vec();
        let x = critic_inputs(states, &u);
        self.critic_c.forward(&x, m).output().iter().sum::<f64>() / m as f64 - self.cfg.e_max
    }

    /// Ascent step on the actor objective of `mode`, then projected dual
    /// ascent with the pre-step `Q_C` values.
    pub fn actor_dual_update(&mut self, batch: &[Transition], mode: TrainMode) -> Result<UpdateStats, DrlError> {
        let states = flat_states(batch, false);
        let (w_r, w_c) = mode.weights(self.lambda);
        let (objective, grad, mean_qc) = self.actor_objective_grad(&states, w_r, w_c);
        if !objective.is_finite() {
            return Err(DrlError::NonFinite {
                what: "actor objective".into(),
                episode: 0,
                step: 0,
            });
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        self.opt_actor.descend(self.actor.params_mut(), &neg);
        let dual_gradient = mean_qc - self.cfg.e_max;
        if mode.updates_dual() {
            self.lambda = (self.lambda + self.cfg.lr_dual * dual_gradient).max(0.0);
        }
        Ok(UpdateStats {
            objective,
            dual_gradient,
            lambda: self.lambda,
            ..Default::default()
        })
    }

    pub fn soft_update(&mut self) {
        let phi = self.cfg.phi;
        self.actor_target.soft_update_from(&self.actor, phi);
        self.critic_r_target.soft_update_from(&self.critic_r, phi);
        self.critic_c_target.soft_update_from(&self.critic_c, phi);
    }

    /// Critics, then actor and dual, then targets.
    pub fn update(&mut self, batch: &[Transition], mode: TrainMode) -> Result<UpdateStats, DrlError> {
        let (loss_r, loss_c) = self.critic_update(batch)?;
        let stats = self.actor_dual_update(batch, mode)?;
        self.soft_update();
        Ok(UpdateStats { loss_r, loss_c, ..stats })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            hidden: vec![8, 8],
            batch_size: 4,
            buffer_capacity: 16,
            ..Default::default()
        }
    }

    fn batch(rng: &mut ChaCha8Rng, m: usize) -> Vec<Transition> {
        (0..m)
            .map(|_| Transition {
                s: [rng.random(), rng.random()],
                u: rng.random(),
                r: -rng.random::<f64>(),
                c: f64::from(u8::from(rng.random_bool(0.3))),
                s_next: [rng.random(), rng.random()],
            })
            .collect()
    }

    #[test]
    fn td_target_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = small_cfg();
        cfg.gamma_r = 0.0;
        let mut agent = Agent::new(cfg, &mut rng);
        let b = batch(&mut rng, 5);
        let (y_r, _) = agent.td_targets(&b);
        assert_eq!(y_r, b.iter().map(|t| t.r).collect::<Vec<_>>());

        // Make the cost target network a constant 10.
        let p = agent.critic_c_target.params_mut();
        p.iter_mut().for_each(|v| *v = 0.0);
        *p.last_mut().unwrap() = 10.0;
        let one = [Transition { c: 1.0, ..b[0] }];
        let (_, y_c) = agent.td_targets(&one);
        assert!((y_c[0] - 10.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_critics_do_not_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = Agent::new(small_cfg(), &mut rng);
        let b = batch(&mut rng, 6);
        let (y_r, _) = agent.td_targets(&b);
        let x = critic_inputs(&flat_states(&b, false), &b.iter().map(|t| t.u).collect::<Vec<_>>());
        let before = agent.critic_r.clone();
        let (loss, grad) = critic_loss_grad(&agent.critic_r, &x, &agent.critic_r.predict(&x));
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        agent.opt_r.descend(agent.critic_r.params_mut(), &grad);
        assert_eq!(agent.critic_r, before);
        assert_eq!(y_r.len(), 6);
    }

    #[test]
    fn dual_step_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = Agent::new(small_cfg(), &mut rng);
        let b = batch(&mut rng, 4);
        let states = flat_states(&b, false);

        // Constant cost critic: Q_C = E_max + 0.2.
        let set_qc = |agent: &mut Agent, v: f64| {
            let p = agent.critic_c.params_mut();
            p.iter_mut().for_each(|x| *x = 0.0);
            *p.last_mut().unwrap() = v;
        };
        agent.lambda = 0.5;
        set_qc(&mut agent, 0.6);
        agent.actor_dual_update(&b, TrainMode::Constrained).unwrap();
        assert!((agent.lambda - 0.52).abs() < 1e-12);

        set_qc(&mut agent, 0.4);
        let before = agent.lambda;
        agent.actor_dual_update(&b, TrainMode::Constrained).unwrap();
        assert_eq!(agent.lambda, before);

        agent.lambda = 0.0;
        set_qc(&mut agent, 0.1);
        agent.actor_dual_update(&b, TrainMode::Constrained).unwrap();
        assert_eq!(agent.lambda, 0.0);
        assert!((agent.dual_gradient(&states) + 0.3).abs() < 1e-12);
    }

    #[test]
    fn frozen_dual_matches_min_latency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = small_cfg();
        cfg.lr_dual = 0.0;
        let mut a = Agent::new(cfg, &mut rng);
        let mut b = a.clone();
        for _ in 0..20 {
            let tr = batch(&mut rng, 4);
            a.update(&tr, TrainMode::Constrained).unwrap();
            b.update(&tr, TrainMode::MinLatency).unwrap();
        }
        assert_eq!(a.actor, b.actor);
        assert_eq!(a.critic_c, b.critic_c);
        assert_eq!(a.lambda, 0.0);
    }

    #[test]
    fn actor_output_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let agent = Agent::new(small_cfg(), &mut rng);
        let mut noise = OuNoise::new(0.15, 0.0, 5.0);
        for _ in 0..200 {
            let s = [rng.random(), rng.random()];
            assert!((0.0..=1.0).contains(&agent.act(s)));
            assert!((0.0..=1.0).contains(&agent.act_explore(s, &mut noise, &mut rng)));
        }
        let mut still = OuNoise::new(0.0, 0.0, 0.0);
        let s = [0.3, 0.7];
        assert_eq!(agent.act_explore(s, &mut still, &mut rng), agent.act(s));
    }

    #[test]
    fn modes_weight_the_critics() {
        assert_eq!(TrainMode::Constrained.weights(0.7), (1.0, 0.7));
        assert_eq!(TrainMode::MinLatency.weights(0.7), (1.0, 0.0));
        assert_eq!(TrainMode::MinDos.weights(0.7), (0.0, 1.0));
        assert_eq!(TrainMode::WeightedSum(0.5).weights(0.7), (0.5, 0.5));
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = AgentConfig { phi: 2.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AgentConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
