use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::mean_abs_change;
use super::run::{run_controller, ControllerSpec, RunRecord};
use super::training::{train, TrainMode, TrainedAgent, LEARNING_CURVE_WINDOW};
use crate::agent::{AgentConfig, ACTION_DIM, OBS_FEATURES};
use crate::error::{Error, Result};
use crate::par;
use crate::plant::PlantConfig;
use crate::trajectories::ReferenceTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Raw duty mapping of the spool input.
    NoLinearMap,
    WindowLength(usize),
    NoWhenLabel,
}

impl AblationVariant {
    pub fn apply(self, base: &AgentConfig) -> Result<AgentConfig> {
        let mut cfg = base.clone();
        match self {
            Self::NoLinearMap => cfg.linear_map = false,
            Self::WindowLength(0) => return Err(Error::Config("window length must be at least 1".into())),
            Self::WindowLength(k) => cfg.window = k,
            Self::NoWhenLabel => cfg.when_labels = false,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoLinearMap => write!(f, "no_linmap"),
            Self::WindowLength(k) => write!(f, "window_length_{k}"),
            Self::NoWhenLabel => write!(f, "no_whenlabel"),
        }
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_linmap" => Ok(Self::NoLinearMap),
            "no_whenlabel" => Ok(Self::NoWhenLabel),
            other => other
                .strip_prefix("window_length_")
                .or_else(|| other.strip_prefix("window_length="))
                .and_then(|k| k.parse().ok())
                .map(Self::WindowLength)
                .ok_or_else(|| Error::Config(format!("unknown ablation variant `{other}`"))),
        }
    }
}

/// Per-step input width of the actor for a config.
pub fn actor_input_dim(cfg: &AgentConfig) -> usize {
    ACTION_DIM + OBS_FEATURES + usize::from(cfg.when_labels)
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub config: AgentConfig,
    pub seed: u64,
    pub trained: TrainedAgent,
    pub curve: Vec<f64>,
    pub tracking: RunRecord,
    /// Mean per-step |Δa| summed over both inputs on the tracking run.
    pub action_change: f64,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub variant: AblationVariant,
    pub baseline: Vec<ArmResult>,
    pub ablated: Vec<ArmResult>,
}

pub fn action_change(rec: &RunRecord) -> f64 {
    mean_abs_change(&rec.spool_inputs()) + mean_abs_change(&rec.extruder_inputs())
}

/// Trains one arm and evaluates it on `reference` without exploration.
pub fn train_arm(
    cfg: &AgentConfig,
    plant: &PlantConfig,
    reference: &ReferenceTrajectory,
    eval_seed: u64,
) -> Result<ArmResult> {
    let trained = train(cfg, plant, TrainMode::Deterministic, |_| {})?;
    let curve = trained.curve(LEARNING_CURVE_WINDOW)?;
    let mut controller = ControllerSpec::Drl(Box::new(trained.agent.clone())).build(plant)?;
    let mut tracking = run_controller(
        controller.as_mut(),
        plant,
        reference,
        eval_seed,
        (cfg.reward_alpha, cfg.reward_offset),
    )?;
    tracking.meta.controller_config = ControllerSpec::Drl(Box::new(trained.agent.clone())).describe();
    Ok(ArmResult {
        action_change: action_change(&tracking),
        config: cfg.clone(),
        seed: cfg.seed,
        trained,
        curve,
        tracking,
    })
}

/// Trains the base config and the variant with the same seeds
/// (`base.seed + k`) and evaluates both on `reference`.
pub fn run_ablation(
    variant: AblationVariant,
    base: &AgentConfig,
    plant: &PlantConfig,
    seeds: usize,
    reference: &ReferenceTrajectory,
    eval_seed: u64,
) -> Result<AblationResult> {
    if seeds == 0 {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let ablated_cfg = variant.apply(base)?;
    let mut jobs = Vec::with_capacity(2 * seeds);
    for k in 0..seeds as u64 {
        jobs.push(AgentConfig {
            seed: base.seed + k,
            ..base.clone()
        });
        jobs.push(AgentConfig {
            seed: base.seed + k,
            ..ablated_cfg.clone()
        });
    }
    let results = par::map(&jobs, |cfg| train_arm(cfg, plant, reference, eval_seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (mut baseline, mut ablated) = (Vec::new(), Vec::new());
    for (i, r) in results.into_iter().enumerate() {
        if i % 2 == 0 {
            baseline.push(r);
        } else {
            ablated.push(r);
        }
    }
    Ok(AblationResult {
        variant,
        baseline,
        ablated,
    })
}
