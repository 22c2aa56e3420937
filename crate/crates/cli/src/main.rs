use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fiberdraw::agent::{AgentCheckpoint, AgentConfig, Precision, TrainingLog};
use fiberdraw::baselines::{identify_model, pso_tune, IdentConfig, PiConfig, PiGains, PsoConfig, QdmcConfig, StepResponseModel};
use fiberdraw::harness::{
    run_ablation, run_experiment, train, write_curves_long, write_long_format, AblationVariant, AgentHandle,
    ControllerSpec, RunMeta, RunRecord, TrainMode, LEARNING_CURVE_WINDOW,
};
use fiberdraw::kv::KvMap;
use fiberdraw::plant::PlantConfig;
use fiberdraw::trajectories::{
    random_spline, random_step, sine_sweep, steady, three_step, ReferenceTrajectory, SineSweep, SplineSpec,
};

#[derive(Parser)]
#[command(name = "fiberdraw", version, about = "Fiber drawing control workbench")]
struct Cli {
    /// `key = value` file with plant and agent settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Interleave control and training on one thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the recurrent actor-critic agent.
    Train {
        /// Override the configured number of control steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a controller on a reference trajectory.
    Eval {
        #[arg(long, value_enum)]
        controller: ControllerKind,
        /// Agent checkpoint for `drl`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Gains JSON written by `tune-pi`.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Step-response CSV written by `ident-qdmc`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        trajectory: TrajectoryArgs,
    },
    /// Tune PI gains with particle swarm optimization.
    TunePi,
    /// Identify the step-response model used by QDMC.
    IdentQdmc {
        #[arg(long, default_value_t = 160)]
        horizon: usize,
    },
    /// Train a baseline and an ablated agent with shared seeds.
    Ablate {
        /// `no_linmap`, `no_whenlabel` or `window_length_<k>`.
        #[arg(long)]
        variant: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate a reference trajectory CSV.
    Traj {
        #[command(flatten)]
        trajectory: TrajectoryArgs,
    },
    /// Convert run CSVs into tidy long-format rows.
    PlotData {
        /// Run CSVs written by `eval`.
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "run")]
        series: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerKind {
    OpenLoop,
    Pi,
    Qdmc,
    Drl,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrajKind {
    Steady,
    RandomStep,
    SineSweep,
    RandomSpline,
    ThreeStep,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long, value_enum, default_value = "random-step")]
    kind: TrajKind,
    /// Steps; the sine sweep length follows from its band.
    #[arg(long, default_value_t = 2400)]
    length: usize,
    /// Seed of the random trajectory kinds.
    #[arg(long, default_value_t = 99)]
    traj_seed: u64,
    /// Load the trajectory from a CSV instead.
    #[arg(long)]
    trajectory_file: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    amplitude: f64,
}

impl TrajectoryArgs {
    fn build(&self, dt: f64) -> Result<ReferenceTrajectory> {
        if let Some(path) = &self.trajectory_file {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            return Ok(ReferenceTrajectory::read_csv(BufReader::new(f))?);
        }
        Ok(match self.kind {
            TrajKind::Steady => steady(550.0, self.length, dt)?,
            TrajKind::RandomStep => random_step(200, 300.0, 600.0, self.length, self.traj_seed, dt)?,
            TrajKind::SineSweep => sine_sweep(
                SineSweep {
                    amplitude: self.amplitude,
                    ..SineSweep::default()
                },
                dt,
            )?,
            TrajKind::RandomSpline => random_spline(SplineSpec::default(), self.length, self.traj_seed, dt)?,
            TrajKind::ThreeStep => three_step(&[450.0, 550.0, 350.0, 450.0], 200, dt)?,
        })
    }
}

fn load_configs(path: Option<&Path>, seed: u64) -> Result<(PlantConfig, AgentConfig)> {
    let Some(path) = path else {
        let agent = AgentConfig {
            seed,
            ..AgentConfig::default()
        };
        return Ok((PlantConfig::default(), agent));
    };
    let mut kv = KvMap::load(path).with_context(|| format!("reading {}", path.display()))?;
    let plant = PlantConfig::from_kv(&mut kv)?;
    let mut agent = AgentConfig::from_kv(&mut kv)?;
    kv.finish()?;
    agent.seed = seed;
    Ok((plant, agent))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_agent(path: &Path) -> Result<AgentHandle> {
    let ck = AgentCheckpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match ck.config.precision {
        Precision::F32 => AgentHandle::F32(ck.restore()?),
        Precision::F64 => AgentHandle::F64(ck.restore()?),
    })
}

fn checkpoint(agent: &AgentHandle) -> AgentCheckpoint {
    match agent {
        AgentHandle::F32(a) => AgentCheckpoint::capture(a),
        AgentHandle::F64(a) => AgentCheckpoint::capture(a),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let (plant, agent_cfg) = load_configs(cli.config.as_deref(), cli.seed)?;
    let out = &cli.out;
    match &cli.command {
        Command::Train { steps } => {
            let mut cfg = agent_cfg;
            if let Some(n) = steps {
                cfg.train_steps = *n;
            }
            let mode = if cli.deterministic {
                TrainMode::Deterministic
            } else {
                TrainMode::Threaded { max_lag: 1 }
            };
            let trained = train(&cfg, &plant, mode, |r| {
                if r.step > 0 && r.step % 5000 == 0 {
                    log::info!("step {} sigma {:.3}", r.step, r.sigma);
                }
            })?;
            let mut log = TrainingLog::new(create(&out.join("training_log.csv"))?)?;
            for r in &trained.records {
                log.record(r)?;
            }
            log.finish()?;
            let window = LEARNING_CURVE_WINDOW.min(trained.rewards.len());
            write_curves_long(
                &[("train".to_string(), trained.curve(window)?)],
                window,
                create(&out.join("learning_curve.csv"))?,
            )?;
            checkpoint(&trained.agent).save(out.join("checkpoint.json"))?;
            println!(
                "trained {} steps, {} updates -> {}",
                trained.rewards.len(),
                trained.iterations,
                out.display()
            );
        }
        Command::Eval {
            controller,
            checkpoint,
            gains,
            model,
            repeats,
            trajectory,
        } => {
            let reference = trajectory.build(plant.dt)?;
            let spec = match controller {
                ControllerKind::OpenLoop => ControllerSpec::OpenLoop {
                    feed: PiConfig::default().feed,
                },
                ControllerKind::Pi => {
                    let Some(path) = gains else {
                        bail!("--gains is required for the PI controller");
                    };
                    let gains: PiGains = serde_json::from_reader(BufReader::new(File::open(path)?))?;
                    ControllerSpec::Pi {
                        gains,
                        config: PiConfig::default(),
                    }
                }
                ControllerKind::Qdmc => ControllerSpec::Qdmc {
                    config: QdmcConfig::default(),
                    model: match model {
                        Some(p) => Some(StepResponseModel::read_csv(BufReader::new(File::open(p)?), plant.dt)?),
                        None => None,
                    },
                    start_feed: PiConfig::default().feed,
                },
                ControllerKind::Drl => {
                    let Some(path) = checkpoint else {
                        bail!("--checkpoint is required for the DRL controller");
                    };
                    ControllerSpec::Drl(Box::new(load_agent(path)?))
                }
            };
            let res = run_experiment(
                &spec,
                &reference,
                &plant,
                *repeats,
                cli.seed,
                (agent_cfg.reward_alpha, agent_cfg.reward_offset),
            )?;
            for (k, run) in res.runs.iter().enumerate() {
                run.write_csv(create(&out.join(format!("run_{k}.csv")))?)?;
                write_json(&out.join(format!("run_{k}.meta.json")), &run.meta)?;
            }
            write_json(&out.join("metrics.json"), &(&res.aggregate, &res.run_metrics, res.mean_rmse))?;
            println!(
                "{}: mean RMSE {:.3} µm, lag {:?} s over {} runs",
                spec.name(),
                res.mean_rmse,
                res.aggregate.lag,
                res.runs.len()
            );
        }
        Command::TunePi => {
            let res = pso_tune(&PsoConfig::default(), PiConfig::default(), &plant, cli.seed)?;
            write_json(&out.join("gains.json"), &res.gains)?;
            write_json(&out.join("pso_trace.json"), &res)?;
            println!("kp = {}, ki = {}, RMSE {:.3} µm", res.gains.kp, res.gains.ki, res.rmse);
        }
        Command::IdentQdmc { horizon } => {
            let cfg = IdentConfig {
                horizon: *horizon,
                ..IdentConfig::default()
            };
            let model = identify_model(&plant, &cfg)?;
            model.write_csv(create(&out.join("step_response.csv"))?)?;
            println!("identified {} coefficients per channel", model.feed.horizon());
        }
        Command::Ablate { variant, seeds, steps } => {
            let variant: AblationVariant = variant.parse()?;
            let mut base = agent_cfg;
            if let Some(n) = steps {
                base.train_steps = *n;
            }
            let reference = random_step(200, 300.0, 600.0, 2400, 99, plant.dt)?;
            let res = run_ablation(variant, &base, &plant, *seeds, &reference, cli.seed)?;
            let window = LEARNING_CURVE_WINDOW.min(base.train_steps);
            let mut curves = Vec::new();
            let mut runs = Vec::new();
            for (label, arms) in [("baseline", &res.baseline), (variant.to_string().as_str(), &res.ablated)] {
                for arm in arms {
                    let name = format!("{label}_seed{}", arm.seed);
                    curves.push((name.clone(), arm.trained.curve(window)?));
                    runs.push((name, arm.tracking.clone()));
                    println!(
                        "{label} seed {}: final reward MA {:.4}, mean |Δa| {:.3}",
                        arm.seed,
                        arm.curve.last().copied().unwrap_or(f64::NAN),
                        arm.action_change
                    );
                }
            }
            write_curves_long(&curves, window, create(&out.join("curves.csv"))?)?;
            for (name, run) in runs {
                write_long_format(&name, &[run], create(&out.join(format!("tracking_{name}.csv")))?)?;
            }
        }
        Command::Traj { trajectory } => {
            let reference = trajectory.build(plant.dt)?;
            reference.write_csv(create(&out.join(format!("{}.csv", reference.kind.as_str())))?)?;
            println!("{} steps", reference.len());
        }
        Command::PlotData { runs, series } => {
            let mut records = Vec::new();
            for path in runs {
                let meta_path = path.with_extension("meta.json");
                let meta: RunMeta = match File::open(&meta_path) {
                    Ok(f) => serde_json::from_reader(BufReader::new(f))?,
                    Err(_) => RunMeta {
                        controller: series.clone(),
                        trajectory: String::new(),
                        trajectory_seed: 0,
                        plant_seed: 0,
                        plant_config_hash: String::new(),
                        controller_config: String::new(),
                        deterministic: true,
                    },
                };
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                records.push(RunRecord::read_csv(BufReader::new(f), meta)?);
            }
            write_long_format(series, &records, create(&out.join("plot_data.csv"))?)?;
        }
    }
    Ok(())
}
