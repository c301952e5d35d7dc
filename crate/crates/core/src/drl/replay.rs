use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DrlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: [f64; 2],
    /// Actor-space action in `[0, 1]`.
    pub u: f64,
    pub r: f64,
    pub c: f64,
    pub s_next: [f64; 2],
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.s_next).chain([&self.u, &self.r, &self.c]).all(|v| v.is_finite())
    }
}

/// Fixed-capacity ring; once full the oldest transition is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `m` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<Transition>, DrlError> {
        if m > self.items.len() || self.items.is_empty() {
            return Err(DrlError::BatchTooLarge {
                requested: m,
                available: self.items.len(),
            });
        }
        Ok((0..m)
            .map(|_| self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}
