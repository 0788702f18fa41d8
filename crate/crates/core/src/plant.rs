//! Parametric discrete-time plants, the quadratic stabilization reward and
//! the damped-pendulum benchmark.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, Mat};

pub const PENDULUM_GRAVITY: f64 = 9.81;
/// Sampling interval `2^-4`.
pub const PENDULUM_DT: f64 = 0.0625;

/// Dynamics families, selected by `id` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Dynamics {
    /// `x1' = x1 + d x2`, `x2' = x2 + d (g sin x1 - xi1 x2 + xi2 a)`.
    Pendulum { gravity: f64, dt: f64 },
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics::Pendulum {
            gravity: PENDULUM_GRAVITY,
            dt: PENDULUM_DT,
        }
    }
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Pendulum { .. } => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Dynamics::Pendulum { .. } => 1,
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Dynamics::Pendulum { .. } => 2,
        }
    }

    /// One step of `x[k+1] = f(x[k], a[k] | xi)`; no shape checks.
    #[inline]
    pub fn apply(&self, x: &[f64], a: &[f64], xi: &[f64]) -> Vec<f64> {
        match *self {
            Dynamics::Pendulum { gravity, dt } => {
                let (x1, x2) = (x[0], x[1]);
                vec![
                    x1 + dt * x2,
                    x2 + dt * (gravity * x1.sin() - xi[0] * x2 + xi[1] * a[0]),
                ]
            }
        }
    }
}

/// Per-coordinate closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let r = Self { lower, upper };
        r.validate()?;
        Ok(r)
    }

    /// `[0, 1] x [5, 50]`.
    pub fn benchmark() -> Self {
        Self {
            lower: vec![0.0, 5.0],
            upper: vec![1.0, 50.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::Config("parameter region bounds must be nonempty and of equal length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("parameter region has lower > upper".into()));
        }
        Ok(())
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        xi.len() == self.lower.len()
            && xi
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBox {
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        Self {
            low: vec![-bound; dim],
            high: vec![bound; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.low.len()
            && a
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.is_empty() || self.low.len() != self.high.len() {
            return Err(Error::Config("action box bounds must be nonempty and of equal length".into()));
        }
        if self.low.iter().zip(&self.high).any(|(l, h)| !(l <= h)) {
            return Err(Error::Config("action box has low > high".into()));
        }
        Ok(())
    }
}

/// Componentwise clamp into the box.
pub fn clip_action(bounds: &ActionBox, a: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(bounds.low.iter().zip(&bounds.high))
        .map(|(v, (l, h))| v.clamp(*l, *h))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub dynamics: Dynamics,
    pub xi: Vec<f64>,
    pub region: ParamRegion,
    pub action_box: ActionBox,
    pub target: Vec<f64>,
}

impl PlantSpec {
    /// Benchmark pendulum at parameter `xi`, target at the origin, actions in `[-1, 1]`.
    pub fn pendulum(xi: [f64; 2]) -> Self {
        Self {
            dynamics: Dynamics::default(),
            xi: xi.to_vec(),
            region: ParamRegion::benchmark(),
            action_box: ActionBox::symmetric(1, 1.0),
            target: vec![0.0, 0.0],
        }
    }

    pub fn with_xi(&self, xi: Vec<f64>) -> Self {
        Self { xi, ..self.clone() }
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.dynamics.action_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        self.action_box.validate()?;
        if self.xi.len() != self.dynamics.param_dim() || self.region.lower.len() != self.xi.len() {
            return Err(Error::Config(format!(
                "system parameter vector has length {}, dynamics needs {}",
                self.xi.len(),
                self.dynamics.param_dim()
            )));
        }
        if !self.region.contains(&self.xi) {
            return Err(Error::Config(format!("system parameter {:?} outside its region", self.xi)));
        }
        if self.action_box.dim() != self.action_dim() || self.target.len() != self.state_dim() {
            return Err(Error::Config("action box or target has wrong dimension".into()));
        }
        Ok(())
    }
}

/// Advances the plant one step. The action must already be inside the box.
pub fn step(spec: &PlantSpec, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    step_with(spec, &spec.xi, x, a)
}

/// As [`step`] but with an explicit (possibly time-varying) parameter vector.
pub fn step_with(spec: &PlantSpec, xi: &[f64], x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.state_dim() || xi.len() != spec.dynamics.param_dim() {
        return Err(Error::Dimension("state or parameter vector length".into()));
    }
    if !spec.action_box.contains(a) {
        return Err(Error::InvalidArgument(format!("action {a:?} outside the action box")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }
    Ok(spec.dynamics.apply(x, a, xi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub r1: Mat,
    pub r2: Mat,
    pub target: Vec<f64>,
}

impl RewardSpec {
    /// `R1 = diag(1, 0.1)`, `R2 = 10`, target at the origin.
    pub fn benchmark() -> Self {
        Self {
            r1: Mat::diag(&[1.0, 0.1]),
            r2: Mat::diag(&[10.0]),
            target: vec![0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r1.dim() != self.target.len() {
            return Err(Error::Config("R1 does not match the target dimension".into()));
        }
        for (name, m) in [("R1", &self.r1), ("R2", &self.r2)] {
            if m.max_asymmetry() > 0.0 || !is_positive_definite(m) {
                return Err(Error::Config(format!("{name} must be symmetric positive definite")));
            }
        }
        Ok(())
    }
}

/// `-(x - x*)ᵀ R1 (x - x*) - aᵀ R2 a`.
pub fn reward(rs: &RewardSpec, x: &[f64], a: &[f64]) -> f64 {
    let e: Vec<f64> = x.iter().zip(&rs.target).map(|(xi, ti)| xi - ti).collect();
    -rs.r1.quad_form(&e) - rs.r2.quad_form(a)
}

/// Time profile of the real system's parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiSchedule {
    Constant { xi: Vec<f64> },
    /// Linear interpolation from `start` at `k = 0` to `end` at `k = horizon`,
    /// constant afterwards.
    Ramp {
        start: Vec<f64>,
        end: Vec<f64>,
        horizon: usize,
    },
}

impl XiSchedule {
    /// `xi2` ramps between 5 and 50 over 200 steps with `xi1 = 1`.
    pub fn benchmark_ramp(increasing: bool) -> Self {
        let (lo, hi) = (vec![1.0, 5.0], vec![1.0, 50.0]);
        let (start, end) = if increasing { (lo, hi) } else { (hi, lo) };
        XiSchedule::Ramp {
            start,
            end,
            horizon: 200,
        }
    }

    pub fn at(&self, k: usize) -> Vec<f64> {
        match self {
            XiSchedule::Constant { xi } => xi.clone(),
            XiSchedule::Ramp { start, end, horizon } => {
                if k >= *horizon {
                    return end.clone();
                }
                let s = k as f64 / *horizon as f64;
                start.iter().zip(end).map(|(a, b)| a + s * (b - a)).collect()
            }
        }
    }

    pub fn endpoints(&self) -> Vec<Vec<f64>> {
        match self {
            XiSchedule::Constant { xi } => vec![xi.clone()],
            XiSchedule::Ramp { start, end, .. } => vec![start.clone(), end.clone()],
        }
    }
}

/// Convenience wrapper matching the schedule-by-profile signature.
pub fn schedule_xi(profile: &XiSchedule, k: usize) -> Vec<f64> {
    profile.at(k)
}
