use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuConfig {
    pub theta: f64,
    pub mu: f64,
    /// Volatility at the first episode.
    pub sigma_start: f64,
    /// Volatility reached after `decay_episodes` episodes.
    pub sigma_end: f64,
    pub decay_episodes: usize,
}

impl Default for OuConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            mu: 0.0,
            sigma_start: 0.2,
            sigma_end: 0.02,
            decay_episodes: 20,
        }
    }
}

impl OuConfig {
    /// Linearly decayed volatility for `episode`.
    pub fn sigma_at(&self, episode: usize) -> f64 {
        if episode >= self.decay_episodes {
            return self.sigma_end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.sigma_start + (self.sigma_end - self.sigma_start) * frac
    }
}

/// Ornstein-Uhlenbeck exploration noise.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub x: f64,
}

impl OuNoise {
    pub fn new(theta: f64, mu: f64, sigma: f64) -> Self {
        Self { theta, mu, sigma, x: mu }
    }

    pub fn reset(&mut self) {
        self.x = self.mu;
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let z: f64 = if self.sigma == 0.0 { 0.0 } else { rng.sample(StandardNormal) };
        self.x += self.theta * (self.mu - self.x) + self.sigma * z;
        self.x
    }
}
