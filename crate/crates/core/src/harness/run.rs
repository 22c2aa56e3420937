use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use crate::agent::{compute_reward, AgentConfig, DrlAgent, Observation};
use crate::baselines::{open_loop_command, OpenLoop, PiConfig, PiController, PiGains, Qdmc, QdmcConfig, StepResponseModel};
use crate::error::{Error, Result};
use crate::nn::Real;
use crate::par;
use crate::plant::{ActuatorCommand, Plant, PlantConfig, StepOutput};
use crate::trajectories::ReferenceTrajectory;

/// Anything that turns plant measurements into actuator commands.
pub trait Controller: Send {
    fn name(&self) -> &str;

    /// Called once before the first plant step of a run.
    fn initial_command(&mut self, reference: &ReferenceTrajectory, plant: &PlantConfig) -> Result<ActuatorCommand>;

    /// Command for step `t` given the latest plant output.
    fn command(&mut self, t: usize, out: &StepOutput, reference: &ReferenceTrajectory) -> Result<ActuatorCommand>;
}

pub struct OpenLoopController {
    pub inner: OpenLoop,
    plant: Option<PlantConfig>,
}

impl OpenLoopController {
    pub fn new(inner: OpenLoop) -> Self {
        Self { inner, plant: None }
    }
}

impl Controller for OpenLoopController {
    fn name(&self) -> &str {
        "open_loop"
    }

    fn initial_command(&mut self, reference: &ReferenceTrajectory, plant: &PlantConfig) -> Result<ActuatorCommand> {
        self.plant = Some(plant.clone());
        self.inner.command(reference.at(0), plant)
    }

    fn command(&mut self, t: usize, _out: &StepOutput, reference: &ReferenceTrajectory) -> Result<ActuatorCommand> {
        let plant = self.plant.as_ref().ok_or_else(|| Error::Domain("controller not started".into()))?;
        self.inner.command(reference.at(t), plant)
    }
}

pub struct PiRunner {
    gains: PiGains,
    config: PiConfig,
    state: Option<(PiController, PlantConfig)>,
}

impl PiRunner {
    pub fn new(gains: PiGains, config: PiConfig) -> Self {
        Self {
            gains,
            config,
            state: None,
        }
    }
}

impl Controller for PiRunner {
    fn name(&self) -> &str {
        "pi"
    }

    fn initial_command(&mut self, reference: &ReferenceTrajectory, plant: &PlantConfig) -> Result<ActuatorCommand> {
        let pi = PiController::new(self.gains, self.config, reference.at(0), plant)?;
        let cmd = pi.initial_command(plant);
        self.state = Some((pi, plant.clone()));
        Ok(cmd)
    }

    fn command(&mut self, t: usize, out: &StepOutput, reference: &ReferenceTrajectory) -> Result<ActuatorCommand> {
        let (pi, plant) = self.state.as_mut().ok_or_else(|| Error::Domain("controller not started".into()))?;
        Ok(pi.command(reference.at(t), out.diameter_measured, plant))
    }
}

pub struct QdmcRunner {
    pub inner: Qdmc,
    /// mm/s used to pick the starting spool input.
    pub start_feed: f64,
}

impl Controller for QdmcRunner {
    fn name(&self) -> &str {
        "qdmc"
    }

    fn initial_command(&mut self, reference: &ReferenceTrajectory, plant: &PlantConfig) -> Result<ActuatorCommand> {
        let cmd = open_loop_command(reference.at(0), self.start_feed, plant.spool_radius_0, plant)?;
        self.inner.reset(cmd);
        Ok(cmd)
    }

    fn command(&mut self, t: usize, out: &StepOutput, reference: &ReferenceTrajectory) -> Result<ActuatorCommand> {
        let p = self.inner.config().prediction_horizon;
        let future: Vec<f64> = (1..=p).map(|k| reference.at(t + k)).collect();
        self.inner.step(out.diameter_measured, &future)
    }
}

impl<T: Real> Controller for DrlAgent<T> {
    fn name(&self) -> &str {
        "drl"
    }

    fn initial_command(&mut self, _reference: &ReferenceTrajectory, _plant: &PlantConfig) -> Result<ActuatorCommand> {
        self.control.begin_episode();
        Ok(self.neutral_command())
    }

    fn command(&mut self, t: usize, out: &StepOutput, reference: &ReferenceTrajectory) -> Result<ActuatorCommand> {
        Ok(self.act(Observation::from_step(out, reference, t))?.command)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    pub d_ref: f64,
    pub d_measured: f64,
    pub a_sp: f64,
    pub a_ex: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub controller: String,
    pub trajectory: String,
    pub trajectory_seed: u64,
    pub plant_seed: u64,
    pub plant_config_hash: String,
    pub controller_config: String,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn measured(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.d_measured).collect()
    }

    pub fn reference(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.d_ref).collect()
    }

    pub fn spool_inputs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.a_sp).collect()
    }

    pub fn extruder_inputs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.a_ex).collect()
    }

    pub fn metrics(&self, dt: f64) -> Result<MetricsReport> {
        MetricsReport::compute(&self.measured(), &self.reference(), dt)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows written by [`RunRecord::write_csv`]; metadata travels separately.
    pub fn read_csv<R: std::io::Read>(input: R, meta: RunMeta) -> Result<Self> {
        let rows = csv::Reader::from_reader(input)
            .deserialize()
            .collect::<std::result::Result<Vec<RunRow>, _>>()?;
        Ok(Self { meta, rows })
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

/// FNV-1a of a config's text form.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Closes the loop for the length of `reference`.
pub fn run_controller(
    controller: &mut dyn Controller,
    plant_cfg: &PlantConfig,
    reference: &ReferenceTrajectory,
    plant_seed: u64,
    reward: (f64, f64),
) -> Result<RunRecord> {
    let initial = controller.initial_command(reference, plant_cfg)?;
    let mut plant = Plant::with_initial(plant_cfg.clone(), plant_seed, initial)?;
    let mut out = plant.step(initial);
    let mut rows = Vec::with_capacity(reference.len());
    for t in 0..reference.len() {
        let cmd = controller.command(t, &out, reference)?;
        rows.push(RunRow {
            t,
            d_ref: reference.at(t),
            d_measured: out.diameter_measured,
            a_sp: cmd.spool_input,
            a_ex: cmd.extruder_input,
            reward: compute_reward(out.diameter_measured, reference.at(t), out.feed_cmd, reward.0, reward.1),
        });
        out = plant.step(cmd);
    }
    Ok(RunRecord {
        meta: RunMeta {
            controller: controller.name().to_string(),
            trajectory: reference.kind.as_str().to_string(),
            trajectory_seed: reference.seed,
            plant_seed,
            plant_config_hash: config_hash(&plant_cfg.to_kv_string()),
            controller_config: String::new(),
            deterministic: true,
        },
        rows,
    })
}

/// A trained agent of either precision.
#[derive(Debug, Clone)]
pub enum AgentHandle {
    F32(DrlAgent<f32>),
    F64(DrlAgent<f64>),
}

impl AgentHandle {
    pub fn config(&self) -> &AgentConfig {
        match self {
            Self::F32(a) => &a.config,
            Self::F64(a) => &a.config,
        }
    }

    fn boxed(&self) -> Box<dyn Controller> {
        match self {
            Self::F32(a) => Box::new(a.clone()),
            Self::F64(a) => Box::new(a.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ControllerSpec {
    OpenLoop { feed: f64 },
    Pi { gains: PiGains, config: PiConfig },
    Qdmc {
        config: QdmcConfig,
        model: Option<StepResponseModel>,
        start_feed: f64,
    },
    Drl(Box<AgentHandle>),
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OpenLoop { .. } => "open_loop",
            Self::Pi { .. } => "pi",
            Self::Qdmc { .. } => "qdmc",
            Self::Drl(_) => "drl",
        }
    }

    /// Settings echoed into run metadata.
    pub fn describe(&self) -> String {
        match self {
            Self::OpenLoop { feed } => format!("feed={feed}"),
            Self::Pi { gains, config } => format!(
                "kp={} ki={} feed={} integrator_limit={}",
                gains.kp, gains.ki, config.feed, config.integrator_limit
            ),
            Self::Qdmc { config, start_feed, .. } => format!(
                "p={} c={} r={} start_feed={start_feed}",
                config.prediction_horizon, config.control_horizon, config.move_suppression
            ),
            Self::Drl(a) => a.config().to_kv_string().lines().collect::<Vec<_>>().join(";"),
        }
    }

    /// Rejects specs that cannot drive `plant`.
    pub fn check(&self, plant: &PlantConfig) -> Result<()> {
        match self {
            Self::OpenLoop { feed } if !(plant.feed_min..=plant.feed_max).contains(feed) => {
                Err(Error::Incompatible(format!("open-loop feed {feed} outside the extruder range")))
            }
            Self::Pi { config, .. } if !(plant.feed_min..=plant.feed_max).contains(&config.feed) => {
                Err(Error::Incompatible(format!("PI feed {} outside the extruder range", config.feed)))
            }
            Self::Qdmc { model: None, .. } => Err(Error::Incompatible("QDMC needs an identified step-response model".into())),
            Self::Qdmc {
                model: Some(m), config, ..
            } => {
                if (m.dt - plant.dt).abs() > 1e-12 {
                    return Err(Error::Incompatible(format!(
                        "model identified at dt={} but plant runs at dt={}",
                        m.dt, plant.dt
                    )));
                }
                config.validate()
            }
            Self::Drl(a) => {
                let cfg = a.config();
                if (cfg.diameter_scale <= 0.0) || cfg.validate().is_err() {
                    return Err(Error::Incompatible("agent configuration is invalid".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, plant: &PlantConfig) -> Result<Box<dyn Controller>> {
        Ok(match self {
            Self::OpenLoop { feed } => Box::new(OpenLoopController::new(OpenLoop::new(*feed, plant.spool_radius_0))),
            Self::Pi { gains, config } => Box::new(PiRunner::new(*gains, *config)),
            Self::Qdmc {
                config,
                model,
                start_feed,
            } => {
                let model = model
                    .clone()
                    .ok_or_else(|| Error::Incompatible("QDMC needs an identified step-response model".into()))?;
                Box::new(QdmcRunner {
                    inner: Qdmc::new(*config, model, plant.clone())?,
                    start_feed: *start_feed,
                })
            }
            Self::Drl(a) => a.boxed(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub run_metrics: Vec<MetricsReport>,
    /// Elementwise mean of the measured series.
    pub mean_measured: Vec<f64>,
    /// Metrics of the averaged response.
    pub aggregate: MetricsReport,
    pub mean_rmse: f64,
}

/// Runs `repeats` closed loops with plant seeds `base_seed + k`. Each repeat
/// gets a fresh controller, so the runs are independent and may execute in
/// parallel; results are collected in seed order.
pub fn run_experiment(
    spec: &ControllerSpec,
    reference: &ReferenceTrajectory,
    plant: &PlantConfig,
    repeats: usize,
    base_seed: u64,
    reward: (f64, f64),
) -> Result<ExperimentResult> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    plant.validate()?;
    spec.check(plant)?;
    let describe = spec.describe();
    let runs = par::map_range(repeats, |k| -> Result<RunRecord> {
        let mut controller = spec.build(plant)?;
        let mut rec = run_controller(controller.as_mut(), plant, reference, base_seed + k as u64, reward)?;
        rec.meta.controller_config = describe.clone();
        Ok(rec)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let run_metrics = runs
        .iter()
        .map(|r| r.metrics(plant.dt))
        .collect::<Result<Vec<_>>>()?;
    let mut mean_measured = vec![0.0; reference.len()];
    for r in &runs {
        for (m, row) in mean_measured.iter_mut().zip(&r.rows) {
            *m += row.d_measured;
        }
    }
    for m in &mut mean_measured {
        *m /= repeats as f64;
    }
    let aggregate = MetricsReport::compute(&mean_measured, &reference.diameters, plant.dt)?;
    let mean_rmse = run_metrics.iter().map(|m| m.rmse).sum::<f64>() / repeats as f64;
    Ok(ExperimentResult {
        runs,
        run_metrics,
        mean_measured,
        aggregate,
        mean_rmse,
    })
}
