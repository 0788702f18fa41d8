//! Exploration noise: the Ornstein-Uhlenbeck process used while pre-training
//! and the two online schedules.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean reversion rate.
    pub p1: f64,
    /// Mean.
    pub p2: f64,
    /// Diffusion scale.
    pub p3: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            p1: 0.15,
            p2: 0.0,
            p3: 0.3,
        }
    }
}

impl OuParams {
    /// Stationary standard deviation `p3 / sqrt(1 - (1 - p1)^2)`.
    pub fn stationary_std(&self) -> f64 {
        self.p3 / (1.0 - (1.0 - self.p1).powi(2)).sqrt()
    }
}

/// `eps[k+1] = eps[k] + p1 (p2 - eps[k]) + p3 eps'` per component.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub params: OuParams,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, params: OuParams) -> Self {
        Self {
            params,
            state: vec![0.0; dim],
        }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: Vec<f64>) {
        self.state = state;
    }

    /// Applies the recurrence with the given standard-normal draws.
    pub fn advance_with(&mut self, eps_prime: &[f64]) -> &[f64] {
        let OuParams { p1, p2, p3 } = self.params;
        for (e, z) in self.state.iter_mut().zip(eps_prime) {
            *e += p1 * (p2 - *e) + p3 * z;
        }
        &self.state
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let draws: Vec<f64> = (0..self.state.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.advance_with(&draws).to_vec()
    }
}

/// Online exploration schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExplorationNoise {
    None,
    /// `scale * max(horizon - k, 0) / horizon * N(0, 1)`.
    Decay { scale: f64, horizon: usize },
    /// `scale * N(0, 1)` while `||x||_2 >= threshold`, otherwise zero.
    NormGated { scale: f64, threshold: f64 },
}

impl ExplorationNoise {
    pub fn decay() -> Self {
        ExplorationNoise::Decay {
            scale: 0.1,
            horizon: 400,
        }
    }

    pub fn norm_gated() -> Self {
        ExplorationNoise::NormGated {
            scale: 0.1,
            threshold: 0.05,
        }
    }

    /// Multiplier applied to a standard normal draw at step `k` and state `x`.
    pub fn scale(&self, k: usize, x: &[f64]) -> f64 {
        match *self {
            ExplorationNoise::None => 0.0,
            ExplorationNoise::Decay { scale, horizon } => {
                if horizon == 0 || k >= horizon {
                    0.0
                } else {
                    scale * (horizon - k) as f64 / horizon as f64
                }
            }
            ExplorationNoise::NormGated { scale, threshold } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm >= threshold {
                    scale
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws the noise vector. A normal sample is consumed per component even
    /// when the scale is zero so the random stream does not depend on the state.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, x: &[f64], dim: usize, rng: &mut R) -> Vec<f64> {
        if matches!(self, ExplorationNoise::None) {
            return vec![0.0; dim];
        }
        let s = self.scale(k, x);
        (0..dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                s * z
            })
            .collect()
    }
}
