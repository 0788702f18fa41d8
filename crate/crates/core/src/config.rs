//! JSON run configuration and the built-in presets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::OnlineParams;
use crate::error::{Error, Result};
use crate::evalkit::{GridAxes, ScoreConfig};
use crate::noise::ExplorationNoise;
use crate::plant::{PlantSpec, RewardSpec, XiSchedule};
use crate::stage1::Stage1Config;

/// A simulated plant at an assumed parameter vector, with its own Adam step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualSystem {
    pub id: u32,
    pub xi: Vec<f64>,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub params: OnlineParams,
    pub noise: ExplorationNoise,
    pub steps: usize,
    pub x0: Vec<f64>,
    /// Parameter of the real system when no schedule is given.
    pub real_xi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<XiSchedule>,
}

impl Stage2Config {
    pub fn effective_schedule(&self) -> XiSchedule {
        self.schedule.clone().unwrap_or_else(|| XiSchedule::Constant {
            xi: self.real_xi.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub x1_range: [f64; 2],
    pub x2_range: [f64; 2],
    pub points: [usize; 2],
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            x1_range: [-std::f64::consts::PI, std::f64::consts::PI],
            x2_range: [-8.0, 8.0],
            points: [41, 41],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plant: PlantSpec,
    pub reward: RewardSpec,
    pub systems: Vec<VirtualSystem>,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    /// Named bases for stage two, by virtual-system id.
    pub cases: BTreeMap<String, Vec<u32>>,
    pub grid: GridAxes,
    pub score: ScoreConfig,
    #[serde(default)]
    pub surface: SurfaceConfig,
}

fn benchmark_systems() -> Vec<VirtualSystem> {
    [
        (1, [0.0, 5.0], 5.0e-4),
        (2, [1.0, 5.0], 5.0e-5),
        (3, [0.0, 50.0], 1.0e-4),
        (4, [1.0, 50.0], 1.0e-4),
        (5, [0.4, 16.0], 5.0e-5),
        (6, [0.6, 16.0], 5.0e-5),
        (7, [0.4, 32.0], 1.0e-4),
        (8, [0.6, 32.0], 1.0e-4),
    ]
    .into_iter()
    .map(|(id, xi, step_size)| VirtualSystem {
        id,
        xi: xi.to_vec(),
        step_size,
    })
    .collect()
}

fn benchmark_cases() -> BTreeMap<String, Vec<u32>> {
    [
        ("case-1", vec![1, 2, 3, 4]),
        ("case-2", vec![5, 6, 7, 8]),
        ("case-3", vec![1, 6, 7, 8]),
        ("case-4", vec![5, 2, 7, 8]),
        ("case-5", vec![1, 2, 7, 8]),
        ("adaptive", vec![1, 2, 4]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl RunConfig {
    /// Full-size networks (4 x 128 hidden units).
    pub fn paper() -> Self {
        let seed = 0;
        Self {
            preset: "paper".into(),
            seed,
            out_dir: PathBuf::from("runs/paper"),
            plant: PlantSpec::pendulum([0.95, 5.5]),
            reward: RewardSpec::benchmark(),
            systems: benchmark_systems(),
            stage1: Stage1Config::full_scale(5.0e-4, seed),
            stage2: Stage2Config {
                params: OnlineParams::default(),
                noise: ExplorationNoise::decay(),
                steps: 1001,
                x0: vec![std::f64::consts::PI, 0.0],
                real_xi: vec![0.95, 5.5],
                schedule: None,
            },
            cases: benchmark_cases(),
            grid: GridAxes::benchmark(),
            score: ScoreConfig::default(),
            surface: SurfaceConfig::default(),
        }
    }

    /// Same protocol with small networks and a bounded episode budget.
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        cfg.preset = "desk".into();
        cfg.out_dir = PathBuf::from("runs/desk");
        cfg.shrink_to_desk_scale();
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected paper or desk)"))),
        }
    }

    pub fn shrink_to_desk_scale(&mut self) {
        let desk = Stage1Config::desk_scale(self.stage1.step_size, self.stage1.seed);
        self.stage1.hidden = desk.hidden;
        self.stage1.episodes = desk.episodes;
        self.stage1.steps_per_episode = desk.steps_per_episode;
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn system(&self, id: u32) -> Result<&VirtualSystem> {
        self.systems
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Config(format!("unknown virtual system id {id}")))
    }

    /// Stage-1 settings for one virtual system. Each system gets its own
    /// seed stream derived from the run seed.
    pub fn stage1_for(&self, id: u32) -> Result<(PlantSpec, Stage1Config)> {
        let sys = self.system(id)?;
        let plant = self.plant.with_xi(sys.xi.clone());
        let cfg = Stage1Config {
            step_size: sys.step_size,
            seed: self.seed.wrapping_mul(1000).wrapping_add(id as u64),
            ..self.stage1.clone()
        };
        Ok((plant, cfg))
    }

    pub fn case(&self, name: &str) -> Result<&[u32]> {
        self.cases
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("unknown case {name:?}")))
    }

    /// Rejects inconsistent settings before anything is computed.
    pub fn validate(&self) -> Result<()> {
        self.plant.region.validate()?;
        self.plant.action_box.validate()?;
        self.reward.validate()?;
        if self.reward.r2.dim() != self.plant.action_dim() || self.reward.target.len() != self.plant.state_dim() {
            return Err(Error::Config("reward matrices do not match the plant dimensions".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.systems {
            if !seen.insert(s.id) {
                return Err(Error::Config(format!("duplicate virtual system id {}", s.id)));
            }
            self.plant.with_xi(s.xi.clone()).validate().map_err(|e| {
                Error::Config(format!("virtual system {}: {e}", s.id))
            })?;
            if !(s.step_size > 0.0) {
                return Err(Error::Config(format!("virtual system {}: step size must be positive", s.id)));
            }
        }
        self.stage1.validate()?;
        self.stage2.params.validate()?;
        if self.stage2.x0.len() != self.plant.state_dim() {
            return Err(Error::Config("stage-2 initial state has the wrong dimension".into()));
        }
        for xi in std::iter::once(self.stage2.real_xi.clone()).chain(self.stage2.effective_schedule().endpoints()) {
            if !self.plant.region.contains(&xi) {
                return Err(Error::Config(format!("real-system parameter {xi:?} outside the parameter region")));
            }
        }
        for (name, ids) in &self.cases {
            if ids.is_empty() {
                return Err(Error::Config(format!("case {name} has an empty basis")));
            }
            for id in ids {
                self.system(*id).map_err(|e| Error::Config(format!("case {name}: {e}")))?;
            }
        }
        for v in self.grid.xi1.iter().flat_map(|a| self.grid.xi2.iter().map(move |b| [*a, *b])) {
            if !self.plant.region.contains(&v) {
                return Err(Error::Config(format!("grid point {v:?} outside the parameter region")));
            }
        }
        Ok(())
    }
}
