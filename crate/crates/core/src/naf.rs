//! Normalized advantage function (NAF) Q-heads.
//!
//! The network output is partitioned as `[V | mu_raw (n_a) | L_diag_raw (n_a) |
//! L_lower (n_a(n_a-1)/2, row-major)]`. `mu = tanh(mu_raw)`, the diagonal of the
//! Cholesky factor is `exp(L_diag_raw)`, and `P = L Lᵀ`, so
//! `Q(x, a) = V(x) - ½ (a - mu)ᵀ P (a - mu)`.

use serde::{Deserialize, Serialize};

use crate::diffnet::{self, mlp_specs, Activation, LayerSpec, NetParams, Tape};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::replay::Experience;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    /// `V = value_scale * raw[0]`. Lets the value head reach returns in the
    /// thousands without the advantage terms having to lag behind it.
    #[serde(default = "unit_scale")]
    pub value_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl NafConfig {
    pub fn new(state_dim: usize, action_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden,
            value_scale: 1.0,
        }
    }

    pub fn with_value_scale(mut self, value_scale: f64) -> Self {
        self.value_scale = value_scale;
        self
    }

    pub fn lower_len(&self) -> usize {
        self.action_dim * (self.action_dim + 1) / 2
    }

    /// `1 + n_a + n_a(n_a+1)/2`.
    pub fn output_dim(&self) -> usize {
        1 + self.action_dim + self.lower_len()
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        mlp_specs(self.state_dim, &self.hidden, self.output_dim(), Activation::Relu)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Dimension("state and action dimensions must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Dimension("hidden layer of width zero".into()));
        }
        if !(self.value_scale.is_finite() && self.value_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("value scale {} must be positive", self.value_scale)));
        }
        Ok(())
    }
}

/// Decoded NAF head at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct NafOutput {
    pub value: f64,
    pub mu: Vec<f64>,
    pub l: Mat,
    pub p: Mat,
}

impl NafOutput {
    /// Decodes raw network outputs for an `action_dim`-dimensional head.
    pub fn from_raw(raw: &[f64], action_dim: usize) -> Result<Self> {
        Self::decode(raw, action_dim, 1.0)
    }

    /// As [`NafOutput::from_raw`] with `V = value_scale * raw[0]`.
    pub fn decode(raw: &[f64], action_dim: usize, value_scale: f64) -> Result<Self> {
        let n = action_dim;
        if raw.len() != 1 + n + n * (n + 1) / 2 {
            return Err(Error::Dimension(format!(
                "raw NAF output has length {} for action_dim {n}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("NAF network output"));
        }
        let value = raw[0] * value_scale;
        let mu: Vec<f64> = raw[1..1 + n].iter().map(|v| v.tanh()).collect();
        let mut l = Mat::zeros(n);
        let diag = &raw[1 + n..1 + 2 * n];
        for (i, d) in diag.iter().enumerate() {
            l[(i, i)] = d.exp();
        }
        let mut at = 1 + 2 * n;
        for i in 1..n {
            for j in 0..i {
                l[(i, j)] = raw[at];
                at += 1;
            }
        }
        if !l.is_finite() {
            return Err(Error::NonFinite("NAF Cholesky diagonal"));
        }
        let p = l.gram();
        if !p.is_finite() {
            return Err(Error::NonFinite("NAF P matrix"));
        }
        Ok(Self { value, mu, l, p })
    }

    pub fn action_dim(&self) -> usize {
        self.mu.len()
    }
}

/// Returns `(Q, A)` with `A = -½ (a - mu)ᵀ P (a - mu)` and `Q = V + A`.
pub fn q_value(head: &NafOutput, a: &[f64]) -> Result<(f64, f64)> {
    if a.len() != head.action_dim() {
        return Err(Error::Dimension(format!(
            "action has length {} but head expects {}",
            a.len(),
            head.action_dim()
        )));
    }
    let d: Vec<f64> = a.iter().zip(&head.mu).map(|(ai, mi)| ai - mi).collect();
    let adv = -0.5 * head.p.quad_form(&d);
    Ok((head.value + adv, adv))
}

/// The maximizer of a single NAF head is its `mu`.
pub fn greedy_action(head: &NafOutput) -> Vec<f64> {
    head.mu.clone()
}

/// Anything that exposes a NAF head per state. Ensemble members implement this.
pub trait QFunction {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn head(&self, x: &[f64]) -> Result<NafOutput>;

    fn q(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        Ok(q_value(&self.head(x)?, a)?.0)
    }
}

impl<T: QFunction + ?Sized> QFunction for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn head(&self, x: &[f64]) -> Result<NafOutput> {
        (**self).head(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Main,
    Target,
}

/// A NAF head plus the tape needed to backpropagate through it.
#[derive(Debug, Clone)]
pub struct NafEval {
    pub head: NafOutput,
    pub raw: Vec<f64>,
    pub tape: Tape,
}

/// Main network `θ^Q` and target network `θ^Q_-` sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    pub config: NafConfig,
    pub main: NetParams,
    pub target: NetParams,
    pub seed: u64,
}

impl QModel {
    /// Randomly initialized main network with the target set equal to it.
    pub fn new(config: NafConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let main = diffnet::init_params(&config.layer_specs(), seed)?;
        Ok(Self {
            config,
            target: main.clone(),
            main,
            seed,
        })
    }

    pub fn from_parts(config: NafConfig, main: NetParams, target: NetParams, seed: u64) -> Result<Self> {
        config.validate()?;
        let specs = config.layer_specs();
        if main.specs() != specs.as_slice() || target.specs() != specs.as_slice() {
            return Err(Error::Dimension("network layout does not match NAF config".into()));
        }
        Ok(Self {
            config,
            main,
            target,
            seed,
        })
    }

    pub fn params(&self, which: Which) -> &NetParams {
        match which {
            Which::Main => &self.main,
            Which::Target => &self.target,
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.state_dim {
            return Err(Error::Dimension(format!(
                "state has length {} but model expects {}",
                x.len(),
                self.config.state_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }

    /// Evaluates one network without recording a tape.
    pub fn head_of(&self, which: Which, x: &[f64]) -> Result<NafOutput> {
        self.check_state(x)?;
        let raw = diffnet::predict(self.params(which), x)?;
        NafOutput::decode(&raw, self.config.action_dim, self.config.value_scale)
    }

    /// `V(x)` of one network.
    pub fn value_of(&self, which: Which, x: &[f64]) -> Result<f64> {
        self.check_state(x)?;
        let raw = diffnet::predict(self.params(which), x)?;
        if !raw[0].is_finite() {
            return Err(Error::NonFinite("NAF value"));
        }
        Ok(raw[0] * self.config.value_scale)
    }
}

impl QFunction for QModel {
    fn state_dim(&self) -> usize {
        self.config.state_dim
    }
    fn action_dim(&self) -> usize {
        self.config.action_dim
    }
    fn head(&self, x: &[f64]) -> Result<NafOutput> {
        self.head_of(Which::Main, x)
    }
}

pub fn naf_eval(m: &QModel, which: Which, x: &[f64]) -> Result<NafEval> {
    m.check_state(x)?;
    let (raw, tape) = diffnet::forward(m.params(which), x)?;
    let head = NafOutput::decode(&raw, m.config.action_dim, m.config.value_scale)?;
    Ok(NafEval { head, raw, tape })
}

/// `r + γ V(x')` using the target network.
pub fn td_target(m: &QModel, r: f64, x_next: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0, 1)")));
    }
    if gamma == 0.0 {
        return Ok(r);
    }
    Ok(r + gamma * m.value_of(Which::Target, x_next)?)
}

/// Gradient of `Q(x, a)` with respect to the raw network outputs, for a unit
/// value scale (multiply entry 0 by the scale otherwise).
///
/// The diagonal of `L` is `exp(raw)`, so its chain factor is the diagonal
/// entry itself.
pub fn q_grad_raw(head: &NafOutput, a: &[f64]) -> Vec<f64> {
    let n = head.action_dim();
    let d: Vec<f64> = a.iter().zip(&head.mu).map(|(ai, mi)| ai - mi).collect();
    let pd = head.p.mul_vec(&d);
    // z = Lᵀ d
    let z: Vec<f64> = (0..n)
        .map(|j| (j..n).map(|i| head.l[(i, j)] * d[i]).sum())
        .collect();
    let mut g = vec![0.0; 1 + n + n * (n + 1) / 2];
    g[0] = 1.0;
    for k in 0..n {
        g[1 + k] = pd[k] * (1.0 - head.mu[k] * head.mu[k]);
        g[1 + n + k] = -z[k] * d[k] * head.l[(k, k)];
    }
    let mut at = 1 + 2 * n;
    for i in 1..n {
        for j in 0..i {
            g[at] = -z[j] * d[i];
            at += 1;
        }
    }
    g
}

/// Mean squared TD loss over `batch` and its exact gradient in the main
/// network's parameters. Targets come from the target network and are held
/// constant.
pub fn batch_loss_and_grad(m: &QModel, batch: &[Experience], gamma: f64) -> Result<(f64, Vec<f64>)> {
    batch_loss_and_grad_clipped(m, batch, gamma, None)
}

/// As [`batch_loss_and_grad`], but with each residual clipped to `[-c, c]`
/// inside the gradient. The returned loss is still the plain mean square.
pub fn batch_loss_and_grad_clipped(
    m: &QModel,
    batch: &[Experience],
    gamma: f64,
    clip: Option<f64>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; m.main.len()];
    for e in batch {
        let t = if e.escaped {
            // pessimistic: the current cost is assumed to persist forever
            e.r / (1.0 - gamma)
        } else {
            td_target(m, e.r, &e.x_next, gamma)?
        };
        let ev = naf_eval(m, Which::Main, &e.x)?;
        let (q, _) = q_value(&ev.head, &e.a)?;
        let resid = t - q;
        loss += resid * resid;
        let r_used = clip.map_or(resid, |c| resid.clamp(-c, c));
        let dq = -2.0 * r_used * scale;
        let mut dy = q_grad_raw(&ev.head, &e.a);
        dy[0] *= m.config.value_scale;
        for v in &mut dy {
            *v *= dq;
        }
        diffnet::backward_accumulate(&m.main, &ev.tape, &dy, &mut grad)?;
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("minibatch loss"));
    }
    Ok((loss, grad))
}

/// `θ_- ← τ θ + (1 - τ) θ_-`.
pub fn soft_update(m: &mut QModel, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside (0, 1]")));
    }
    if tau == 1.0 {
        m.target.values_mut().copy_from_slice(m.main.values());
        return Ok(());
    }
    for (t, &w) in m.target.values_mut().iter_mut().zip(m.main.values()) {
        *t = tau * w + (1.0 - tau) * *t;
    }
    Ok(())
}
