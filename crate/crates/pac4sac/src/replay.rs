//! Fixed-capacity experience storage with uniform minibatch sampling.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// One environment interaction. `terminal` records true termination only;
/// time-limit truncation is not stored, so bootstrapping stays stationary.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Ring buffer of transitions. Once full, the oldest entries are
/// overwritten first; sampling is uniform with replacement.
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { storage: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of stored transitions; this is the `N` used by the complexity
    /// penalty at loss time.
    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.storage[index]
    }

    /// Uniform-with-replacement indices for a minibatch of `count`.
    pub fn sample_indices(&self, count: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::Contract("sample from an empty replay buffer".into()));
        }
        Ok((0..count).map(|_| rng.random_range(0..self.storage.len())).collect())
    }

    /// Uniform-with-replacement minibatch of `count` transitions.
    pub fn sample<'a>(&'a self, count: usize, rng: &mut dyn RngCore) -> Result<Vec<&'a Transition>> {
        Ok(self.sample_indices(count, rng)?.into_iter().map(|i| &self.storage[i]).collect())
    }
}
