use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::{Agent, AgentConfig};
use super::net::DenseNet;
use crate::error::DrlError;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where the run stood when the checkpoint was written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: AgentConfig,
    pub actor: DenseNet,
    pub critic_r: DenseNet,
    pub critic_c: DenseNet,
    pub actor_target: DenseNet,
    pub critic_r_target: DenseNet,
    pub critic_c_target: DenseNet,
    pub lambda: f64,
    pub meta: RunMeta,
}

impl Checkpoint {
    pub fn of(agent: &Agent, meta: RunMeta) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: agent.cfg.clone(),
            actor: agent.actor.clone(),
            critic_r: agent.critic_r.clone(),
            critic_c: agent.critic_c.clone(),
            actor_target: agent.actor_target.clone(),
            critic_r_target: agent.critic_r_target.clone(),
            critic_c_target: agent.critic_c_target.clone(),
            lambda: agent.lambda,
            meta,
        }
    }

    /// Rebuilds an agent with `cfg`, refusing if any network shape differs.
    pub fn into_agent(self, cfg: AgentConfig) -> Result<Agent, DrlError> {
        let actor_w = cfg.actor_widths();
        let critic_w = cfg.critic_widths();
        let checks = [
            ("actor", &self.actor, &actor_w),
            ("actor target", &self.actor_target, &actor_w),
            ("reward critic", &self.critic_r, &critic_w),
            ("reward critic target", &self.critic_r_target, &critic_w),
            ("cost critic", &self.critic_c, &critic_w),
            ("cost critic target", &self.critic_c_target, &critic_w),
        ];
        for (name, net, widths) in checks {
            if net.widths() != widths.as_slice() || net.num_params() != net.params().len() {
                return Err(DrlError::Shape(format!(
                    "{name} has widths {:?}, expected {widths:?}",
                    net.widths()
                )));
            }
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(DrlError::Shape(format!("stored multiplier {} is invalid", self.lambda)));
        }
        let mut agent = Agent::from_nets(cfg, self.actor, self.critic_r, self.critic_c);
        agent.actor_target = self.actor_target;
        agent.critic_r_target = self.critic_r_target;
        agent.critic_c_target = self.critic_c_target;
        agent.lambda = self.lambda;
        Ok(agent)
    }
}

pub fn save_checkpoint(agent: &Agent, meta: RunMeta, path: &Path) -> Result<(), DrlError> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, &Checkpoint::of(agent, meta)).map_err(|e| DrlError::Checkpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, DrlError> {
    let fail = |reason: String| DrlError::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| fail(e.to_string()))?;
    let ck: Checkpoint = serde_json::from_reader(BufReader::new(file)).map_err(|e| fail(e.to_string()))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(fail(format!(
            "format version {} (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    Ok(ck)
}

/// Loads every parameter and the multiplier into an agent configured by
/// `cfg`, with the constraint bound replaced by `e_max`.
pub fn load_warm_start(path: &Path, cfg: &AgentConfig, e_max: f64) -> Result<Agent, DrlError> {
    let cfg = AgentConfig {
        e_max,
        ..cfg.clone()
    };
    load_checkpoint(path)?.into_agent(cfg)
}
