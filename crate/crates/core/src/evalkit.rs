//! Policy scoring, parameter-grid sweeps, and CSV exports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{online_run, OnlineConfig, OnlineParams, QEnsemble};
use crate::error::{Error, Result};
use crate::naf::{QFunction, QModel, Which};
use crate::plant::{self, clip_action, PlantSpec, RewardSpec, XiSchedule};

/// Scores at or above this count as a successful stabilization.
pub const SUCCESS_THRESHOLD: f64 = -2000.0;

/// Deterministic state-feedback policy.
pub trait Policy {
    fn act(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for QModel {
    fn act(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.head_of(Which::Main, x)?.mu)
    }
}

impl<M: QFunction> Policy for QEnsemble<M> {
    fn act(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.greedy_action(x)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).act(x)
    }
}

/// Adapts a closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F: Fn(&[f64]) -> Vec<f64>> Policy for FnPolicy<F> {
    fn act(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub x0: Vec<f64>,
    /// Last step index; rewards at `k = 0..=horizon` are summed.
    pub horizon: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            x0: vec![std::f64::consts::PI, 0.0],
            horizon: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub xi: Vec<f64>,
    pub score: f64,
    pub success: bool,
    /// Set when the rollout produced a non-finite state; `score` is then `-inf`.
    pub diverged: bool,
    pub trajectory: Vec<Vec<f64>>,
}

pub fn is_success(score: f64) -> bool {
    score >= SUCCESS_THRESHOLD
}

/// Noiseless greedy rollout of `policy` on `plant`, summing
/// `R(x[k], μ(x[k]))` over `k = 0..=horizon`.
pub fn score<P: Policy + ?Sized>(policy: &P, plant: &PlantSpec, rs: &RewardSpec, cfg: &ScoreConfig) -> Result<ScoreReport> {
    if cfg.x0.len() != plant.state_dim() {
        return Err(Error::Dimension("initial state length".into()));
    }
    let mut x = cfg.x0.clone();
    let mut total = 0.0;
    let mut trajectory = Vec::with_capacity(cfg.horizon + 1);
    for k in 0..=cfg.horizon {
        let a = match policy.act(&x) {
            Ok(a) => clip_action(&plant.action_box, &a),
            Err(e) if e.is_divergence() => return Ok(diverged(plant, trajectory)),
            Err(e) => return Err(e),
        };
        total += plant::reward(rs, &x, &a);
        trajectory.push(x.clone());
        if k == cfg.horizon {
            break;
        }
        x = plant.dynamics.apply(&x, &a, &plant.xi);
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(diverged(plant, trajectory));
        }
    }
    Ok(ScoreReport {
        xi: plant.xi.clone(),
        score: total,
        success: is_success(total),
        diverged: false,
        trajectory,
    })
}

fn diverged(plant: &PlantSpec, trajectory: Vec<Vec<f64>>) -> ScoreReport {
    ScoreReport {
        xi: plant.xi.clone(),
        score: f64::NEG_INFINITY,
        success: false,
        diverged: true,
        trajectory,
    }
}

/// Axes of a rectangular grid over `(xi1, xi2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl GridAxes {
    /// `{0.05, 0.15, …, 0.95} x {5.5, 6.5, …, 49.5}` (10 x 45).
    pub fn benchmark() -> Self {
        Self {
            xi1: (0..10).map(|i| 0.05 + 0.1 * i as f64).collect(),
            xi2: (0..45).map(|j| 5.5 + j as f64).collect(),
        }
    }

    pub fn single(xi1: f64, xi2: f64) -> Self {
        Self {
            xi1: vec![xi1],
            xi2: vec![xi2],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n2 = self.xi2.len();
        (0..self.xi1.len()).flat_map(move |i| (0..n2).map(move |j| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axes: GridAxes,
    /// `scores[i][j]` is the score at `(xi1[i], xi2[j])`.
    pub scores: Vec<Vec<f64>>,
    pub seeds: Vec<Vec<u64>>,
}

impl SweepGrid {
    pub fn success_count(&self) -> usize {
        self.scores.iter().flatten().filter(|s| is_success(**s)).count()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.xi1.len() * self.axes.xi2.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["xi1", "xi2", "score", "success", "seed"])?;
        for (i, j) in self.axes.cells() {
            let s = self.scores[i][j];
            out.write_record([
                self.axes.xi1[i].to_string(),
                self.axes.xi2[j].to_string(),
                s.to_string(),
                is_success(s).to_string(),
                self.seeds[i][j].to_string(),
            ])?;
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

/// SplitMix64-style mix of `(base, i, j)` into a per-cell seed.
pub fn cell_seed(base: u64, i: usize, j: usize) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1))
        .wrapping_add(0xD1B5_4A32_D192_ED03u64.wrapping_mul(j as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates `cell(i, j, xi, seed)` on every grid cell in the given order.
/// Cells share no state, so the order only affects scheduling.
pub fn sweep_cells<F>(axes: &GridAxes, base_seed: u64, order: &[(usize, usize)], mut cell: F) -> Result<SweepGrid>
where
    F: FnMut(usize, usize, [f64; 2], u64) -> Result<f64>,
{
    if axes.xi1.is_empty() || axes.xi2.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let mut scores = vec![vec![f64::NAN; axes.xi2.len()]; axes.xi1.len()];
    let mut seeds = vec![vec![0u64; axes.xi2.len()]; axes.xi1.len()];
    for &(i, j) in order {
        let seed = cell_seed(base_seed, i, j);
        scores[i][j] = cell(i, j, [axes.xi1[i], axes.xi2[j]], seed)?;
        seeds[i][j] = seed;
    }
    if scores.iter().flatten().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("sweep order does not cover every cell".into()));
    }
    Ok(SweepGrid {
        axes: axes.clone(),
        scores,
        seeds,
    })
}

/// Scores a fixed policy on every grid cell.
pub fn sweep_policy<P: Policy + ?Sized>(
    policy: &P,
    base: &PlantSpec,
    rs: &RewardSpec,
    axes: &GridAxes,
    cfg: &ScoreConfig,
) -> Result<SweepGrid> {
    let order: Vec<_> = axes.cells().collect();
    sweep_cells(axes, 0, &order, |_, _, xi, _| {
        Ok(score(policy, &base.with_xi(xi.to_vec()), rs, cfg)?.score)
    })
}

/// One online adaptation per cell from uniform weights; the cell value is
/// the reward collected during that run.
pub fn online_cell<M: QFunction + Clone>(
    members: &[M],
    params: OnlineParams,
    base: &PlantSpec,
    rs: &RewardSpec,
    xi: [f64; 2],
    cfg: &OnlineConfig,
) -> Result<f64> {
    let mut ens = QEnsemble::uniform(members.to_vec(), params)?;
    let real = base.with_xi(xi.to_vec());
    match online_run(&mut ens, &real, &XiSchedule::Constant { xi: xi.to_vec() }, rs, cfg) {
        Ok(log) => Ok(log.online_return()),
        Err(e) if e.is_divergence() => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

pub fn sweep_online<M: QFunction + Clone>(
    members: &[M],
    params: OnlineParams,
    base: &PlantSpec,
    rs: &RewardSpec,
    axes: &GridAxes,
    cfg: &OnlineConfig,
) -> Result<SweepGrid> {
    let order: Vec<_> = axes.cells().collect();
    sweep_cells(axes, cfg.seed, &order, |_, _, xi, seed| {
        let cell_cfg = OnlineConfig { seed, ..cfg.clone() };
        online_cell(members, params, base, rs, xi, &cell_cfg)
    })
}

/// First action component of `policy` over a rectangular state grid,
/// indexed `[i][j]` for `(x1[i], x2[j])`.
pub fn policy_surface<P: Policy + ?Sized>(policy: &P, x1: &[f64], x2: &[f64]) -> Result<Vec<Vec<f64>>> {
    x1.iter()
        .map(|&a| x2.iter().map(|&b| Ok(policy.act(&[a, b])?[0])).collect())
        .collect()
}

pub fn write_surface_csv<W: Write>(w: W, x1: &[f64], x2: &[f64], surface: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x1", "x2", "action"])?;
    for (i, a) in x1.iter().enumerate() {
        for (j, b) in x2.iter().enumerate() {
            out.write_record([a.to_string(), b.to_string(), surface[i][j].to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Time-response trace of a rollout: `k, x1, x2, ...`.
pub fn write_trace_csv<W: Write>(w: W, trajectory: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if let Some(first) = trajectory.first() {
        let mut header = vec!["k".to_string()];
        header.extend((1..=first.len()).map(|i| format!("x{i}")));
        out.write_record(&header)?;
    }
    for (k, x) in trajectory.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Evenly spaced points including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
