use serde::{Deserialize, Serialize};

use super::metrics::learning_curve;
use super::run::AgentHandle;
use crate::agent::{train_agent, train_agent_threaded, AgentConfig, DrlAgent, Precision, TrainingRecord};
use crate::error::Result;
use crate::nn::Real;
use crate::plant::PlantConfig;

pub const LEARNING_CURVE_WINDOW: usize = 10_000;

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub agent: AgentHandle,
    pub rewards: Vec<f64>,
    pub records: Vec<TrainingRecord>,
    pub iterations: u64,
}

impl TrainedAgent {
    /// Trailing average reward with `window` clipped to the log length.
    pub fn curve(&self, window: usize) -> Result<Vec<f64>> {
        learning_curve(&self.rewards, window.min(self.rewards.len()).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    /// One train iteration per control step on the calling thread.
    Deterministic,
    /// Separate train thread; at most `max_lag` control steps ahead.
    Threaded { max_lag: u64 },
}

fn run<T: Real>(
    config: &AgentConfig,
    plant: &PlantConfig,
    mode: TrainMode,
    observer: &mut dyn FnMut(&TrainingRecord),
) -> Result<(DrlAgent<T>, Vec<TrainingRecord>, u64)> {
    let mut agent = DrlAgent::<T>::new(config.clone(), plant)?;
    let mut records = Vec::with_capacity(config.train_steps);
    let mut sink = |r: &TrainingRecord| {
        observer(r);
        records.push(*r);
        Ok(())
    };
    let summary = match mode {
        TrainMode::Deterministic => train_agent(&mut agent, plant, &mut sink)?,
        TrainMode::Threaded { max_lag } => train_agent_threaded(&mut agent, plant, max_lag, &mut sink)?,
    };
    Ok((agent, records, summary.iterations))
}

/// Builds and trains an agent in the configured precision.
pub fn train(
    config: &AgentConfig,
    plant: &PlantConfig,
    mode: TrainMode,
    mut observer: impl FnMut(&TrainingRecord),
) -> Result<TrainedAgent> {
    config.validate()?;
    plant.validate()?;
    let (agent, records, iterations) = match config.precision {
        Precision::F32 => {
            let (a, r, i) = run::<f32>(config, plant, mode, &mut observer)?;
            (AgentHandle::F32(a), r, i)
        }
        Precision::F64 => {
            let (a, r, i) = run::<f64>(config, plant, mode, &mut observer)?;
            (AgentHandle::F64(a), r, i)
        }
    };
    Ok(TrainedAgent {
        rewards: records.iter().map(|r| r.reward).collect(),
        agent,
        records,
        iterations,
    })
}
