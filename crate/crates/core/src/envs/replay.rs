//! Ring-buffer replay with uniform sampling (with replacement) under an
//! explicitly passed rng. Single writer; no interior mutability.

use std::collections::VecDeque;

use rand::Rng;

use crate::critic::Transition;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    buffer: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { buffer: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition, evicting the oldest entry beyond capacity.
    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    /// Uniform sample of `batch_size` transitions, with replacement.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.buffer.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok((0..batch_size)
            .map(|_| self.buffer[rng.random_range(0..self.buffer.len())].clone())
            .collect())
    }
}
