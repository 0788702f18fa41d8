//! Pre-training on a virtual system: continuous deep Q-learning with a NAF
//! head, experience replay, OU exploration and soft target updates.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::evalkit::{self, ScoreConfig};
use crate::naf::{batch_loss_and_grad_clipped, soft_update, NafConfig, QModel, Which};
use crate::noise::{OuNoise, OuParams};
use crate::plant::{self, clip_action, PlantSpec, RewardSpec};
use crate::replay::{Experience, ReplayBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub episodes: usize,
    /// Environment steps per episode.
    pub steps_per_episode: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub step_size: f64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Gradient updates start once the buffer holds `max(batch_size, warmup)`.
    pub warmup: usize,
    /// Initial states are drawn uniformly from this box.
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    pub ou: OuParams,
    /// Ends an episode early once `|x_i| > bound_i` for some coordinate. The
    /// escaping transition bootstraps from `r / (1 - gamma)` instead of `V(x')`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bound: Option<Vec<f64>>,
    /// Output scale of the value head.
    pub value_scale: f64,
    /// Periodic greedy rollouts on the virtual system; the best-scoring
    /// parameters are returned instead of the last ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<Checkpointing>,
    /// Clips each TD residual to `[-c, c]` in the gradient (Huber-style).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub td_clip: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpointing {
    pub every: usize,
    pub rollout: ScoreConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self::desk_scale(5e-4, 0)
    }
}

impl Stage1Config {
    /// Small network and episode budget that trains in minutes on one core.
    pub fn desk_scale(step_size: f64, seed: u64) -> Self {
        Self {
            episodes: 500,
            steps_per_episode: 200,
            batch_size: 128,
            gamma: 0.99,
            tau: 0.005,
            step_size,
            hidden: vec![64, 64],
            replay_capacity: 1_000_000,
            warmup: 128,
            init_low: vec![-std::f64::consts::PI, -8.0],
            init_high: vec![std::f64::consts::PI, 8.0],
            ou: OuParams::default(),
            state_bound: Some(vec![7.0, 20.0]),
            value_scale: 100.0,
            td_clip: None,
            checkpoint: Some(Checkpointing {
                every: 10,
                rollout: ScoreConfig::default(),
            }),
            seed,
        }
    }

    /// Four hidden layers of 128 units.
    pub fn full_scale(step_size: f64, seed: u64) -> Self {
        Self {
            hidden: vec![128; 4],
            ..Self::desk_scale(step_size, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("stage-1 config: {m}")));
        if self.steps_per_episode == 0 || self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("steps, batch size and replay capacity must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layers must be nonempty");
        }
        if !(self.value_scale.is_finite() && self.value_scale > 0.0) {
            return bad("value scale must be positive");
        }
        if self.state_bound.as_ref().is_some_and(|b| b.iter().any(|l| !(*l > 0.0))) {
            return bad("state bounds must be positive");
        }
        if self.checkpoint.as_ref().is_some_and(|c| c.every == 0) {
            return bad("checkpoint interval must be positive");
        }
        if self.init_low.len() != self.init_high.len()
            || self.init_low.iter().zip(&self.init_high).any(|(l, h)| !(l <= h))
        {
            return bad("initial-state box is malformed");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub mean_loss: f64,
    pub final_state_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
    pub gradient_steps: u64,
    /// `(episode, score)` of the returned checkpoint, if checkpointing ran.
    pub selected: Option<(usize, f64)>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for rec in &self.episodes {
            out.serialize(rec)?;
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

/// Runs pre-training against `spec` (the virtual system) and returns the
/// trained model with its per-episode log.
pub fn train(spec: &PlantSpec, rs: &RewardSpec, cfg: &Stage1Config) -> Result<(QModel, TrainLog)> {
    train_with_progress(spec, rs, cfg, |_| {})
}

pub fn train_with_progress<F>(
    spec: &PlantSpec,
    rs: &RewardSpec,
    cfg: &Stage1Config,
    mut on_episode: F,
) -> Result<(QModel, TrainLog)>
where
    F: FnMut(&EpisodeRecord),
{
    spec.validate()?;
    rs.validate()?;
    cfg.validate()?;
    let n_x = spec.state_dim();
    let n_a = spec.action_dim();
    if cfg.init_low.len() != n_x {
        return Err(Error::Config("initial-state box does not match the state dimension".into()));
    }
    if cfg.state_bound.as_ref().is_some_and(|b| b.len() != n_x) {
        return Err(Error::Config("state bound does not match the state dimension".into()));
    }

    let mut model = QModel::new(
        NafConfig::new(n_x, n_a, cfg.hidden.clone()).with_value_scale(cfg.value_scale),
        cfg.seed,
    )?;
    // Separate stream from the initializer so the two never alias.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5a9e1);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut adam = AdamState::new(model.main.len(), AdamConfig::with_step_size(cfg.step_size));
    let mut ou = OuNoise::new(n_a, cfg.ou);
    let min_fill = cfg.batch_size.max(cfg.warmup);
    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64, QModel)> = None;

    for episode in 0..cfg.episodes {
        ou.reset();
        let mut x: Vec<f64> = cfg
            .init_low
            .iter()
            .zip(&cfg.init_high)
            .map(|(&l, &h)| if l < h { rng.random_range(l..h) } else { l })
            .collect();
        let mut ret = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;

        for _ in 0..cfg.steps_per_episode {
            let mu = model.head_of(Which::Main, &x)?.mu;
            let eps = ou.next(&mut rng);
            let raw: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
            let a = clip_action(&spec.action_box, &raw);
            let x_next = plant::step(spec, &x, &a)?;
            if x_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!("plant state became non-finite in episode {episode}")));
            }
            let r = plant::reward(rs, &x, &a);
            ret += r;
            let escaped = cfg
                .state_bound
                .as_ref()
                .is_some_and(|b| x_next.iter().zip(b).any(|(v, l)| v.abs() > *l));
            let e = Experience::new(x, a, x_next.clone(), r);
            buffer.push(if escaped { e.escaping() } else { e });
            x = x_next;

            if buffer.len() >= min_fill {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                let (loss, grad) = batch_loss_and_grad_clipped(&model, &batch, cfg.gamma, cfg.td_clip)
                    .map_err(|e| Error::Diverged(format!("episode {episode}: {e}")))?;
                adam_step(&mut model.main, &grad, &mut adam)
                    .map_err(|e| Error::Diverged(format!("episode {episode}: {e}")))?;
                if !model.main.is_finite() {
                    return Err(Error::Diverged(format!("parameters became non-finite in episode {episode}")));
                }
                soft_update(&mut model, cfg.tau)?;
                loss_sum += loss;
                loss_count += 1;
                log.gradient_steps += 1;
            }
            if escaped {
                break;
            }
        }

        let rec = EpisodeRecord {
            episode,
            ret,
            mean_loss: if loss_count > 0 {
                loss_sum / loss_count as f64
            } else {
                0.0
            },
            final_state_norm: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        on_episode(&rec);
        log.episodes.push(rec);

        if let Some(c) = &cfg.checkpoint {
            if (episode + 1) % c.every == 0 || episode + 1 == cfg.episodes {
                let g = evalkit::score(&model, spec, rs, &c.rollout)?.score;
                if best.as_ref().is_none_or(|(_, bg, _)| g > *bg) {
                    best = Some((episode, g, model.clone()));
                }
            }
        }
    }
    if let Some((episode, g, m)) = best {
        log.selected = Some((episode, g));
        model = m;
    }
    Ok((model, log))
}
