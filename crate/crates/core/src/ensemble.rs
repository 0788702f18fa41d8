//! Online adaptation over a frozen basis of pre-trained NAF Q-functions.
//!
//! The real system's Q-function is `Q(x, a | w) = Σ_j w_j Q_j(x, a)` with `w`
//! on the probability simplex. Each step takes one semi-gradient step on
//! `½ (t - Q(x, a | w))² + η B(w)` with the log barrier
//! `B(w) = -Σ_j log(w_j + ε_w)`, halving the step until every weight is
//! strictly positive, then renormalizes.

use std::io::Write;
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_solve, Mat};
use crate::naf::{q_value, NafOutput, QFunction};
use crate::noise::ExplorationNoise;
use crate::plant::{self, clip_action, PlantSpec, RewardSpec, XiSchedule};
use crate::replay::Experience;

/// Maximum number of step halvings before an update is skipped.
pub const MAX_HALVINGS: u32 = 60;

/// States with a larger Euclidean norm abort an online run.
pub const DIVERGENCE_NORM: f64 = 1e6;

const SIMPLEX_TOL: f64 = 1e-9;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs at least one weight".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineParams {
    /// Base learning rate `α`.
    pub alpha: f64,
    /// Barrier coefficient `η`.
    pub eta: f64,
    /// Barrier offset `ε_w`.
    pub eps_w: f64,
    pub gamma: f64,
}

impl Default for OnlineParams {
    fn default() -> Self {
        Self {
            alpha: 5.0e-5,
            eta: 1.0e-7,
            eps_w: 1.0e-9,
            gamma: 0.99,
        }
    }
}

impl OnlineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.eta >= 0.0) || !(self.eps_w > 0.0) {
            return Err(Error::Config("online alpha and eps_w must be positive, eta nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("online gamma must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Frozen members plus the adaptable weights.
#[derive(Debug, Clone)]
pub struct QEnsemble<M> {
    members: Vec<M>,
    weights: EnsembleWeights,
    pub params: OnlineParams,
}

impl<M: QFunction> QEnsemble<M> {
    pub fn new(members: Vec<M>, weights: EnsembleWeights, params: OnlineParams) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
        }
        if members.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        let (n_x, n_a) = (members[0].state_dim(), members[0].action_dim());
        if members.iter().any(|m| m.state_dim() != n_x || m.action_dim() != n_a) {
            return Err(Error::Dimension("ensemble members disagree on state/action dimensions".into()));
        }
        params.validate()?;
        Ok(Self {
            members,
            weights,
            params,
        })
    }

    /// Uniform initial weights `1/N`.
    pub fn uniform(members: Vec<M>, params: OnlineParams) -> Result<Self> {
        let n = members.len().max(1);
        Self::new(members, EnsembleWeights::uniform(n), params)
    }

    pub fn members(&self) -> &[M] {
        &self.members
    }

    pub fn into_members(self) -> Vec<M> {
        self.members
    }

    pub fn weights(&self) -> &EnsembleWeights {
        &self.weights
    }

    pub fn set_weights(&mut self, w: EnsembleWeights) -> Result<()> {
        if w.len() != self.members.len() {
            return Err(Error::Dimension("weight count".into()));
        }
        self.weights = w;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.members[0].state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.members[0].action_dim()
    }

    pub fn heads(&self, x: &[f64]) -> Result<Vec<NafOutput>> {
        self.members.iter().map(|m| m.head(x)).collect()
    }

    /// Per-member `Q_j(x, a)`.
    pub fn member_q(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.heads(x)?
            .iter()
            .map(|h| q_value(h, a).map(|(q, _)| q))
            .collect()
    }

    /// `Σ_j w_j Q_j(x, a)`.
    pub fn q(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        Ok(weighted_sum(self.weights.as_slice(), &self.member_q(x, a)?))
    }

    /// The maximizer of `Q(x, · | w)`.
    pub fn greedy_action(&self, x: &[f64]) -> Result<Vec<f64>> {
        greedy_from_heads(&self.heads(x)?, self.weights.as_slice())
    }

    /// Returns `(δ, t)` with `t = r + γ max_a' Q(x', a' | w)` treated as a constant.
    pub fn td_error(&self, e: &Experience) -> Result<(f64, f64)> {
        let (delta, t, _) = self.td_parts(e)?;
        Ok((delta, t))
    }

    /// `δ`, `t`, and the member values `Q_j(x, a)`.
    fn td_parts(&self, e: &Experience) -> Result<(f64, f64, Vec<f64>)> {
        let w = self.weights.as_slice();
        let gamma = self.params.gamma;
        let t = if gamma == 0.0 {
            e.r
        } else {
            let next = self.heads(&e.x_next)?;
            let a_star = greedy_from_heads(&next, w)?;
            let q_next = next
                .iter()
                .map(|h| q_value(h, &a_star).map(|(q, _)| q))
                .collect::<Result<Vec<_>>>()?;
            e.r + gamma * weighted_sum(w, &q_next)
        };
        let qs = self.member_q(&e.x, &e.a)?;
        let delta = t - weighted_sum(w, &qs);
        Ok((delta, t, qs))
    }

    /// `∂/∂w ½ (t - Q(x, a | w))² = -δ Q_j(x, a)` with `t` frozen.
    pub fn grad_w(&self, e: &Experience) -> Result<Vec<f64>> {
        let (delta, _, qs) = self.td_parts(e)?;
        Ok(td_grad(delta, &qs))
    }

    /// One barrier-regularized semi-gradient step on `e`, halving the step
    /// until all weights are positive, followed by renormalization.
    pub fn update_weights(&mut self, e: &Experience) -> Result<WeightUpdate> {
        let (delta, target, qs) = self.td_parts(e)?;
        let w = self.weights.as_slice();
        let mut direction = td_grad(delta, &qs);
        let barrier = barrier_grad(w, self.params.eps_w)?;
        for (d, b) in direction.iter_mut().zip(&barrier) {
            *d += self.params.eta * b;
        }
        if direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight gradient"));
        }
        let halvings = match halving_step(w, &direction, self.params.alpha, MAX_HALVINGS) {
            Some((next, l)) => {
                self.weights = EnsembleWeights(normalize(next));
                Some(l)
            }
            None => {
                warn!("no positive step within {MAX_HALVINGS} halvings; weight update skipped");
                None
            }
        };
        Ok(WeightUpdate {
            delta,
            target,
            halvings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightUpdate {
    pub delta: f64,
    pub target: f64,
    /// Halvings used, or `None` when the update was skipped.
    pub halvings: Option<u32>,
}

fn weighted_sum(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn td_grad(delta: f64, qs: &[f64]) -> Vec<f64> {
    qs.iter().map(|q| -delta * q).collect()
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Solves `(Σ_m w_m P_m) â = Σ_j w_j P_j μ_j`.
pub fn greedy_from_heads(heads: &[NafOutput], w: &[f64]) -> Result<Vec<f64>> {
    if heads.len() != w.len() || heads.is_empty() {
        return Err(Error::Dimension("heads and weights differ in length".into()));
    }
    if heads.len() == 1 {
        return Ok(heads[0].mu.clone());
    }
    let n = heads[0].action_dim();
    let mut h = Mat::zeros(n);
    let mut rhs = vec![0.0; n];
    for (head, &wj) in heads.iter().zip(w) {
        if wj == 0.0 {
            continue;
        }
        h.add_scaled(wj, &head.p);
        for (r, v) in rhs.iter_mut().zip(head.p.mul_vec(&head.mu)) {
            *r += wj * v;
        }
    }
    spd_solve(&h, &rhs)
}

/// `∂B/∂w_j = -1 / (w_j + ε_w)` for `B(w) = -Σ log(w_j + ε_w)`.
pub fn barrier_grad(w: &[f64], eps_w: f64) -> Result<Vec<f64>> {
    w.iter()
        .map(|&wj| {
            let s = wj + eps_w;
            if s > 0.0 {
                Ok(-1.0 / s)
            } else {
                Err(Error::InvalidArgument(format!("barrier undefined at w_j = {wj}")))
            }
        })
        .collect()
}

/// `B(w) = -Σ log(w_j + ε_w)`.
pub fn barrier(w: &[f64], eps_w: f64) -> f64 {
    -w.iter().map(|wj| (wj + eps_w).ln()).sum::<f64>()
}

/// Finds the smallest `l <= cap` with every entry of `w - α 2^-l g` strictly
/// positive. Returns the candidate (not yet normalized) and `l`.
pub fn halving_step(w: &[f64], g: &[f64], alpha: f64, cap: u32) -> Option<(Vec<f64>, u32)> {
    let mut step = alpha;
    for l in 0..=cap {
        let cand: Vec<f64> = w.iter().zip(g).map(|(wi, gi)| wi - step * gi).collect();
        if cand.iter().all(|&v| v > 0.0) {
            return Some((cand, l));
        }
        step *= 0.5;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    /// Number of plant steps (`k = 0 .. steps-1`).
    pub steps: usize,
    pub x0: Vec<f64>,
    pub noise: ExplorationNoise,
    pub seed: u64,
}

impl OnlineConfig {
    /// 1001 steps from `[π, 0]` with the decaying noise schedule.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            steps: 1001,
            x0: vec![std::f64::consts::PI, 0.0],
            noise: ExplorationNoise::decay(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub abs_delta: f64,
    /// Weights after this step's update.
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnlineLog {
    pub records: Vec<OnlineRecord>,
    pub skipped_updates: usize,
}

impl OnlineLog {
    /// Sum of the rewards collected online.
    pub fn online_return(&self) -> f64 {
        self.records.iter().map(|r| r.r).sum()
    }

    pub fn final_weights(&self) -> Option<&[f64]> {
        self.records.last().map(|r| r.w.as_slice())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if let Some(first) = self.records.first() {
            let mut header = vec!["k".to_string()];
            header.extend((1..=first.x.len()).map(|i| format!("x{i}")));
            if first.a.len() == 1 {
                header.push("a".into());
            } else {
                header.extend((1..=first.a.len()).map(|i| format!("a{i}")));
            }
            header.push("r".into());
            header.push("abs_delta".into());
            header.extend((1..=first.w.len()).map(|i| format!("w_{i}")));
            out.write_record(&header)?;
        }
        for rec in &self.records {
            let mut row = vec![rec.k.to_string()];
            row.extend(rec.x.iter().map(f64::to_string));
            row.extend(rec.a.iter().map(f64::to_string));
            row.push(rec.r.to_string());
            row.push(rec.abs_delta.to_string());
            row.extend(rec.w.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Runs online adaptation against the real plant. The plant's parameter at
/// step `k` is `schedule.at(k)`.
pub fn online_run<M: QFunction>(
    ens: &mut QEnsemble<M>,
    real: &PlantSpec,
    schedule: &XiSchedule,
    rs: &RewardSpec,
    cfg: &OnlineConfig,
) -> Result<OnlineLog> {
    if cfg.x0.len() != real.state_dim() || ens.state_dim() != real.state_dim() || ens.action_dim() != real.action_dim() {
        return Err(Error::Dimension("ensemble, plant and initial state disagree".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = OnlineLog {
        records: Vec::with_capacity(cfg.steps),
        skipped_updates: 0,
    };
    let mut x = cfg.x0.clone();
    for k in 0..cfg.steps {
        let greedy = ens.greedy_action(&x)?;
        let eps = cfg.noise.sample(k, &x, greedy.len(), &mut rng);
        let raw: Vec<f64> = greedy.iter().zip(&eps).map(|(g, e)| g + e).collect();
        let a = clip_action(&real.action_box, &raw);
        let xi = schedule.at(k);
        let x_next = plant::step_with(real, &xi, &x, &a)?;
        let norm = x_next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged(format!("state norm {norm} at step {k}")));
        }
        let r = plant::reward(rs, &x, &a);
        let e = Experience::new(x, a, x_next, r);
        let up = ens.update_weights(&e)?;
        if up.halvings.is_none() {
            log.skipped_updates += 1;
        }
        let Experience { x: x_k, a, x_next, .. } = e;
        log.records.push(OnlineRecord {
            k,
            x: x_k,
            a,
            r,
            abs_delta: up.delta.abs(),
            w: ens.weights().as_slice().to_vec(),
        });
        x = x_next;
    }
    Ok(log)
}
