//! Dense feedforward networks with hand-written reverse-mode gradients and Adam.
//!
//! Parameters live in one flat `f64` vector. Layer `i` owns a row-major
//! `out_dim x in_dim` weight block followed by its `out_dim` bias entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Builds `input -> hidden[0] -> ... -> output` with `hidden_act` on every
/// hidden layer and a linear output layer.
pub fn mlp_specs(input: usize, hidden: &[usize], output: usize, hidden_act: Activation) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        specs.push(LayerSpec::new(prev, h, hidden_act));
        prev = h;
    }
    specs.push(LayerSpec::new(prev, output, Activation::Linear));
    specs
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Dimension("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Dimension(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::Dimension(format!(
                "layer {} outputs {} but layer {} expects {}",
                i,
                pair[0].out_dim,
                i + 1,
                pair[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Flat parameter vector together with its layer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    specs: Vec<LayerSpec>,
    values: Vec<f64>,
}

impl NetParams {
    /// Wraps an existing parameter vector; its length must match the layout.
    pub fn from_values(specs: Vec<LayerSpec>, values: Vec<f64>) -> Result<Self> {
        validate_specs(&specs)?;
        let expected = param_len(&specs);
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "parameter vector has length {} but layout needs {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { specs, values })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// (weight offset, bias offset) of every layer.
    pub fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut offsets = Vec::with_capacity(self.specs.len());
        let mut at = 0;
        for s in &self.specs {
            let w = at;
            let b = w + s.in_dim * s.out_dim;
            offsets.push((w, b));
            at = b + s.out_dim;
        }
        offsets
    }
}

/// Total parameter count of a layout: sum of `in*out + out`.
pub fn param_len(specs: &[LayerSpec]) -> usize {
    specs.iter().map(LayerSpec::param_count).sum()
}

/// Weights uniform on `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`, biases zero.
pub fn init_params(specs: &[LayerSpec], seed: u64) -> Result<NetParams> {
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(param_len(specs));
    for s in specs {
        let bound = 1.0 / (s.in_dim as f64).sqrt();
        for _ in 0..s.in_dim * s.out_dim {
            values.push(rng.random_range(-bound..=bound));
        }
        values.extend(std::iter::repeat_n(0.0, s.out_dim));
    }
    Ok(NetParams {
        specs: specs.to_vec(),
        values,
    })
}

/// Activations recorded during one forward pass. `acts[0]` is the input and
/// `acts[i + 1]` the post-activation output of layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }

    pub fn output(&self) -> &[f64] {
        &self.acts[self.acts.len() - 1]
    }
}

#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], act: Activation, out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(w.chunks_exact(n_in).zip(b).map(|(row, &bias)| {
        let z = row.iter().zip(x).fold(bias, |acc, (wi, xi)| acc + wi * xi);
        act.apply(z)
    }));
}

/// Runs the network on `x`, returning its output and the tape for `backward`.
pub fn forward(p: &NetParams, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
    if x.len() != p.input_dim() {
        return Err(Error::Dimension(format!(
            "input has length {} but network expects {}",
            x.len(),
            p.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    let mut acts = Vec::with_capacity(p.specs.len() + 1);
    acts.push(x.to_vec());
    for (s, (w_off, b_off)) in p.specs.iter().zip(p.layer_offsets()) {
        let w = &p.values[w_off..b_off];
        let b = &p.values[b_off..b_off + s.out_dim];
        let mut out = Vec::with_capacity(s.out_dim);
        affine(w, b, &acts[acts.len() - 1], s.activation, &mut out);
        acts.push(out);
    }
    let y = acts[acts.len() - 1].clone();
    Ok((y, Tape { acts }))
}

/// Output only; skips building a tape.
pub fn predict(p: &NetParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::Dimension(format!(
            "input has length {} but network expects {}",
            x.len(),
            p.input_dim()
        )));
    }
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    for (s, (w_off, b_off)) in p.specs.iter().zip(p.layer_offsets()) {
        affine(
            &p.values[w_off..b_off],
            &p.values[b_off..b_off + s.out_dim],
            &cur,
            s.activation,
            &mut next,
        );
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Exact gradients of a scalar loss given `dloss_dy` at the network output.
pub fn backward(p: &NetParams, tape: &Tape, dloss_dy: &[f64]) -> Result<Gradients> {
    let mut params = vec![0.0; p.len()];
    let input = backward_accumulate(p, tape, dloss_dy, &mut params)?;
    Ok(Gradients { params, input })
}

/// Like [`backward`] but adds the parameter gradient into `grad` and returns
/// only the input gradient.
pub fn backward_accumulate(
    p: &NetParams,
    tape: &Tape,
    dloss_dy: &[f64],
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    if tape.acts.len() != p.specs.len() + 1
        || tape
            .acts
            .iter()
            .skip(1)
            .zip(&p.specs)
            .any(|(a, s)| a.len() != s.out_dim)
        || tape.acts[0].len() != p.input_dim()
    {
        return Err(Error::Dimension("tape does not match network layout".into()));
    }
    if dloss_dy.len() != p.output_dim() {
        return Err(Error::Dimension(format!(
            "output gradient has length {} but network outputs {}",
            dloss_dy.len(),
            p.output_dim()
        )));
    }
    if grad.len() != p.len() {
        return Err(Error::Dimension("gradient buffer length".into()));
    }

    let offsets = p.layer_offsets();
    let mut upstream = dloss_dy.to_vec();
    for (i, s) in p.specs.iter().enumerate().rev() {
        let (w_off, b_off) = offsets[i];
        let x = &tape.acts[i];
        let y = &tape.acts[i + 1];
        // dL/dz for this layer's pre-activation.
        for (u, &yo) in upstream.iter_mut().zip(y) {
            *u *= s.activation.derivative_from_output(yo);
        }
        let mut dx = vec![0.0; s.in_dim];
        let w = &p.values[w_off..b_off];
        let (gw, gb) = grad[w_off..b_off + s.out_dim].split_at_mut(s.in_dim * s.out_dim);
        for (o, &dz) in upstream.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            gb[o] += dz;
            let row = o * s.in_dim..(o + 1) * s.in_dim;
            for ((g, dxi), (&xi, &wi)) in gw[row.clone()]
                .iter_mut()
                .zip(dx.iter_mut())
                .zip(x.iter().zip(&w[row]))
            {
                *g += dz * xi;
                *dxi += dz * wi;
            }
        }
        upstream = dx;
    }
    Ok(upstream)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_step_size(step_size: f64) -> Self {
        Self {
            step_size,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One bias-corrected Adam update of `p` along gradient `g`.
pub fn adam_step(p: &mut NetParams, g: &[f64], s: &mut AdamState) -> Result<()> {
    if g.len() != p.len() || s.m.len() != p.len() {
        return Err(Error::Dimension(format!(
            "gradient length {} / optimizer length {} vs {} parameters",
            g.len(),
            s.m.len(),
            p.len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let AdamConfig {
        step_size,
        beta1,
        beta2,
        epsilon,
    } = s.config;
    s.t += 1;
    let bc1 = 1.0 - beta1.powf(s.t as f64);
    let bc2 = 1.0 - beta2.powf(s.t as f64);
    for ((w, &gi), (m, v)) in p
        .values
        .iter_mut()
        .zip(g)
        .zip(s.m.iter_mut().zip(s.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * gi;
        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= step_size * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}
