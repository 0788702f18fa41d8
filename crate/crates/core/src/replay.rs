use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One transition `(x, a, x', r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub x_next: Vec<f64>,
    pub r: f64,
    /// `x'` left the training region; the episode ended here.
    #[serde(default)]
    pub escaped: bool,
}

impl Experience {
    pub fn new(x: Vec<f64>, a: Vec<f64>, x_next: Vec<f64>, r: f64) -> Self {
        Self {
            x,
            a,
            x_next,
            r,
            escaped: false,
        }
    }

    pub fn escaping(mut self) -> Self {
        self.escaped = true;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite()
            && self
                .x
                .iter()
                .chain(&self.a)
                .chain(&self.x_next)
                .all(|v| v.is_finite())
    }
}

/// FIFO ring buffer of experiences.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            // don't reserve a full million up front
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            pushed: 0,
        })
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
        self.pushed += 1;
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

    /// Total pushes over the buffer's lifetime, including evicted ones.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < count || count == 0 {
            return Err(Error::Underfilled {
                len: self.items.len(),
                requested: count,
            });
        }
        let n = self.items.len();
        Ok((0..count).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<Experience>> {
        Ok(self
            .sample_indices(count, rng)?
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect())
    }
}
