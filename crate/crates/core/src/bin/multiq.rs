use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use multiq::config::RunConfig;
use multiq::ensemble::{online_run, EnsembleWeights, OnlineConfig, QEnsemble};
use multiq::evalkit::{self, linspace, GridAxes, Policy};
use multiq::model_io::{load_model, save_model};
use multiq::naf::QModel;
use multiq::plant::XiSchedule;
use multiq::stage1::train_with_progress;
use multiq::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "multiq", version, about = "Pre-train NAF Q-functions on virtual systems and adapt their ensemble online")]
struct Cli {
    /// JSON run configuration; defaults to the selected preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration (paper or desk) used when --config is absent.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Shrink networks and episode counts to the desk-scale budget.
    #[arg(long, global = true)]
    desk_scale: bool,
    /// Directory holding pre-trained models (default: <out>/models).
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the effective configuration as JSON.
    InitConfig {
        #[arg(long)]
        write: PathBuf,
    },
    /// Train one Q-function per listed virtual system.
    Pretrain {
        /// Comma-separated ids, or `paper-8` / `all` for every configured system.
        #[arg(long, default_value = "")]
        systems: String,
    },
    /// Adapt ensemble weights online against the real system.
    Online {
        #[command(flatten)]
        basis: BasisArgs,
        /// Constant real-system parameter `xi1,xi2`.
        #[arg(long, value_delimiter = ',', conflicts_with = "ramp")]
        xi: Option<Vec<f64>>,
        /// Ramp xi2 between 5 and 50 over 200 steps with xi1 = 1.
        #[arg(long, value_enum)]
        ramp: Option<Ramp>,
        /// Noise schedule override.
        #[arg(long, value_enum)]
        noise: Option<NoiseKind>,
    },
    /// Score grid over the parameter region.
    Sweep {
        #[command(flatten)]
        basis: BasisArgs,
        /// Score a single pre-trained member instead of running online adaptation.
        #[arg(long, conflicts_with_all = ["basis", "case"])]
        member: Option<u32>,
        /// Evaluate a single cell `xi1,xi2` instead of the configured grid.
        #[arg(long, value_delimiter = ',')]
        single: Option<Vec<f64>>,
    },
    /// Noiseless rollout score of a member or a fixed-weight ensemble.
    Score {
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long, conflicts_with_all = ["basis", "case"])]
        member: Option<u32>,
        /// Ensemble weights (default uniform).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        xi: Option<Vec<f64>>,
    },
    /// Greedy action over a grid of states.
    Surface {
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long, conflicts_with_all = ["basis", "case"])]
        member: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Args, Debug, Default)]
struct BasisArgs {
    /// Comma-separated virtual-system ids forming the basis.
    #[arg(long, value_delimiter = ',')]
    basis: Option<Vec<u32>>,
    /// Named basis from the config (case-1 .. case-5, adaptive).
    #[arg(long)]
    case: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ramp {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseKind {
    None,
    Decay,
    NormGated,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    models: PathBuf,
}

impl Ctx {
    fn model_path(&self, id: u32) -> PathBuf {
        self.models.join(format!("system-{id}.json"))
    }

    fn load_member(&self, id: u32) -> Result<QModel> {
        self.cfg.system(id)?;
        load_model(self.model_path(id))
    }

    fn basis(&self, args: &BasisArgs) -> Result<(String, Vec<u32>)> {
        match (&args.basis, &args.case) {
            (Some(_), Some(_)) => Err(Error::Config("give either --basis or --case, not both".into())),
            (Some(ids), None) if !ids.is_empty() => Ok((
                format!("basis-{}", ids.iter().map(u32::to_string).collect::<Vec<_>>().join("-")),
                ids.clone(),
            )),
            (None, Some(name)) => Ok((name.clone(), self.cfg.case(name)?.to_vec())),
            _ => Err(Error::Config("a basis is required (--basis LIST or --case NAME)".into())),
        }
    }

    fn ensemble(&self, ids: &[u32], weights: Option<&Vec<f64>>) -> Result<QEnsemble<QModel>> {
        let members = ids.iter().map(|&id| self.load_member(id)).collect::<Result<Vec<_>>>()?;
        let w = match weights {
            Some(w) => EnsembleWeights::new(w.clone()).map_err(|e| Error::Config(e.to_string()))?,
            None => EnsembleWeights::uniform(members.len()),
        };
        QEnsemble::new(members, w, self.cfg.stage2.params)
    }

    fn write(&self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let path = self.out.join(name);
        f(&path)?;
        info!("wrote {}", path.display());
        Ok(path)
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn parse_ids(list: &str, cfg: &RunConfig) -> Result<Vec<u32>> {
    let list = list.trim();
    if list.is_empty() {
        return Ok(Vec::new());
    }
    if list == "paper-8" || list == "all" {
        return Ok(cfg.systems.iter().map(|s| s.id).collect());
    }
    list.split(',')
        .map(|t| {
            let id: u32 = t
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad system id {t:?}")))?;
            cfg.system(id)?;
            Ok(id)
        })
        .collect()
}

fn xi_pair(v: &[f64]) -> Result<[f64; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Config("expected two comma-separated values xi1,xi2".into())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(&cli.preset)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if cli.desk_scale {
        cfg.shrink_to_desk_scale();
    }
    cfg.validate()?;

    let out = cfg.out_dir.clone();
    let models = cli.models.clone().unwrap_or_else(|| out.join("models"));
    let ctx = Ctx { cfg, out, models };

    if let Command::InitConfig { write } = &cli.command {
        return fs::write(write, ctx.cfg.to_json()?).map_err(|e| Error::Io {
            path: write.clone(),
            source: e,
        });
    }

    create_dir(&ctx.out)?;
    fs::write(ctx.out.join("config.json"), ctx.cfg.to_json()?).map_err(|e| Error::Io {
        path: ctx.out.join("config.json"),
        source: e,
    })?;

    match cli.command {
        Command::InitConfig { .. } => unreachable!(),
        Command::Pretrain { systems } => pretrain(&ctx, &parse_ids(&systems, &ctx.cfg)?),
        Command::Online { basis, xi, ramp, noise } => online(&ctx, &basis, xi, ramp, noise),
        Command::Sweep { basis, member, single } => sweep(&ctx, &basis, member, single),
        Command::Score { basis, member, weights, xi } => score(&ctx, &basis, member, weights, xi),
        Command::Surface { basis, member, weights } => surface(&ctx, &basis, member, weights),
    }
}

fn pretrain(ctx: &Ctx, ids: &[u32]) -> Result<()> {
    if ids.is_empty() {
        info!("no systems requested");
        return Ok(());
    }
    create_dir(&ctx.models)?;
    create_dir(&ctx.out.join("logs"))?;
    for &id in ids {
        let (plant, s1) = ctx.cfg.stage1_for(id)?;
        info!("training virtual system {id} (xi = {:?}, step size {})", plant.xi, s1.step_size);
        let (model, log) = train_with_progress(&plant, &ctx.cfg.reward, &s1, |r| {
            if (r.episode + 1) % 50 == 0 {
                info!("system {id} episode {} return {:.1} loss {:.3}", r.episode + 1, r.ret, r.mean_loss);
            }
        })?;
        if let Some((episode, g)) = log.selected {
            info!("system {id}: kept checkpoint after episode {} (score {g:.1})", episode + 1);
        }
        save_model(&model, ctx.model_path(id))?;
        ctx.write(&format!("logs/system-{id}.csv"), |p| log.save_csv(p))?;
        let report = evalkit::score(&model, &plant, &ctx.cfg.reward, &ctx.cfg.score)?;
        println!("system {id}: score on own virtual system {:.3} (success: {})", report.score, report.success);
    }
    Ok(())
}

fn online(ctx: &Ctx, basis: &BasisArgs, xi: Option<Vec<f64>>, ramp: Option<Ramp>, noise: Option<NoiseKind>) -> Result<()> {
    let (label, ids) = ctx.basis(basis)?;
    let mut ens = ctx.ensemble(&ids, None)?;
    let mut s2 = ctx.cfg.stage2.clone();
    if let Some(v) = xi {
        s2.real_xi = xi_pair(&v)?.to_vec();
        s2.schedule = None;
    }
    if let Some(r) = ramp {
        s2.schedule = Some(XiSchedule::benchmark_ramp(matches!(r, Ramp::Up)));
    }
    match noise {
        Some(NoiseKind::None) => s2.noise = multiq::noise::ExplorationNoise::None,
        Some(NoiseKind::Decay) => s2.noise = multiq::noise::ExplorationNoise::decay(),
        Some(NoiseKind::NormGated) => s2.noise = multiq::noise::ExplorationNoise::norm_gated(),
        None => {}
    }
    let schedule = s2.effective_schedule();
    for e in schedule.endpoints() {
        if !ctx.cfg.plant.region.contains(&e) {
            return Err(Error::Config(format!("real-system parameter {e:?} outside the parameter region")));
        }
    }
    let real = ctx.cfg.plant.with_xi(schedule.at(0));
    let run_cfg = OnlineConfig {
        steps: s2.steps,
        x0: s2.x0.clone(),
        noise: s2.noise,
        seed: ctx.cfg.seed,
    };
    let log = online_run(&mut ens, &real, &schedule, &ctx.cfg.reward, &run_cfg)?;
    ctx.write(&format!("online-{label}.csv"), |p| log.save_csv(p))?;
    println!(
        "{label}: online return {:.3}, final weights {:?}, skipped updates {}",
        log.online_return(),
        ens.weights().as_slice(),
        log.skipped_updates
    );
    Ok(())
}

fn sweep(ctx: &Ctx, basis: &BasisArgs, member: Option<u32>, single: Option<Vec<f64>>) -> Result<()> {
    let axes = match single {
        Some(v) => {
            let [a, b] = xi_pair(&v)?;
            if !ctx.cfg.plant.region.contains(&[a, b]) {
                return Err(Error::Config(format!("grid point {:?} outside the parameter region", [a, b])));
            }
            GridAxes::single(a, b)
        }
        None => ctx.cfg.grid.clone(),
    };
    let (label, grid) = match member {
        Some(id) => {
            let m = ctx.load_member(id)?;
            let g = evalkit::sweep_policy(&m, &ctx.cfg.plant, &ctx.cfg.reward, &axes, &ctx.cfg.score)?;
            (format!("system-{id}"), g)
        }
        None => {
            let (label, ids) = ctx.basis(basis)?;
            let members = ids.iter().map(|&id| ctx.load_member(id)).collect::<Result<Vec<_>>>()?;
            let s2 = &ctx.cfg.stage2;
            let run_cfg = OnlineConfig {
                steps: s2.steps,
                x0: s2.x0.clone(),
                noise: s2.noise,
                seed: ctx.cfg.seed,
            };
            let g = evalkit::sweep_online(&members, s2.params, &ctx.cfg.plant, &ctx.cfg.reward, &axes, &run_cfg)?;
            (label, g)
        }
    };
    ctx.write(&format!("sweep-{label}.csv"), |p| grid.save_csv(p))?;
    println!("{label}: {}/{} cells at or above the success threshold", grid.success_count(), grid.cell_count());
    Ok(())
}

fn policy_for(ctx: &Ctx, basis: &BasisArgs, member: Option<u32>, weights: Option<Vec<f64>>) -> Result<(String, Box<dyn Policy>)> {
    match member {
        Some(id) => Ok((format!("system-{id}"), Box::new(ctx.load_member(id)?))),
        None => {
            let (label, ids) = ctx.basis(basis)?;
            Ok((label, Box::new(ctx.ensemble(&ids, weights.as_ref())?)))
        }
    }
}

fn score(ctx: &Ctx, basis: &BasisArgs, member: Option<u32>, weights: Option<Vec<f64>>, xi: Option<Vec<f64>>) -> Result<()> {
    let (label, policy) = policy_for(ctx, basis, member, weights)?;
    let xi = match xi {
        Some(v) => xi_pair(&v)?.to_vec(),
        None => ctx.cfg.stage2.real_xi.clone(),
    };
    let plant = ctx.cfg.plant.with_xi(xi);
    plant.validate()?;
    let report = evalkit::score(policy.as_ref(), &plant, &ctx.cfg.reward, &ctx.cfg.score)?;
    ctx.write(&format!("score-{label}.csv"), |p| {
        let f = fs::File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
        evalkit::write_trace_csv(std::io::BufWriter::new(f), &report.trajectory)
    })?;
    println!(
        "{label} on xi = {:?}: score {:.3} (success: {})",
        report.xi, report.score, report.success
    );
    if report.diverged {
        return Err(Error::Diverged("rollout produced a non-finite state".into()));
    }
    Ok(())
}

fn surface(ctx: &Ctx, basis: &BasisArgs, member: Option<u32>, weights: Option<Vec<f64>>) -> Result<()> {
    let (label, policy) = policy_for(ctx, basis, member, weights)?;
    let sc = &ctx.cfg.surface;
    let x1 = linspace(sc.x1_range[0], sc.x1_range[1], sc.points[0]);
    let x2 = linspace(sc.x2_range[0], sc.x2_range[1], sc.points[1]);
    let s = evalkit::policy_surface(policy.as_ref(), &x1, &x2)?;
    ctx.write(&format!("surface-{label}.csv"), |p| {
        let f = fs::File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
        evalkit::write_surface_csv(std::io::BufWriter::new(f), &x1, &x2, &s)
    })?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
