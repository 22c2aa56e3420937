use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use super::config::AgentConfig;
use super::controller::DrlAgent;
use super::learner::TrainStats;
use super::memory::HistoryMemory;
use super::types::{compute_reward, Observation};
use crate::error::{Error, Result};
use crate::nn::Real;
use crate::plant::{ActuatorCommand, Plant, PlantConfig};
use crate::seed::derive_seed;
use crate::trajectories::{random_step, ReferenceTrajectory};

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRecord {
    pub step: u64,
    pub episode: usize,
    pub reward: f64,
    pub critic_loss: Option<f64>,
    pub actor_step: Option<f64>,
    pub sigma: f64,
}

/// CSV sink for [`TrainingRecord`]s. Missing updates are left empty.
pub struct TrainingLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> TrainingLog<W> {
    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(["step", "reward", "critic_loss", "actor_step", "sigma"])?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, r: &TrainingRecord) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.writer.write_record([
            r.step.to_string(),
            r.reward.to_string(),
            opt(r.critic_loss),
            opt(r.actor_step),
            r.sigma.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSummary {
    /// Reward of every control step.
    pub rewards: Vec<f64>,
    /// Per-step executed spool and extruder inputs.
    pub commands: Vec<ActuatorCommand>,
    pub iterations: u64,
    pub episodes: usize,
}

/// Plant and reference for training episode `episode`.
pub fn training_episode(
    cfg: &AgentConfig,
    plant: &PlantConfig,
    episode: usize,
    initial: ActuatorCommand,
) -> Result<(Plant, ReferenceTrajectory)> {
    let e = episode as u64;
    let reference = random_step(
        cfg.train_ref_interval,
        cfg.train_ref_lo,
        cfg.train_ref_hi,
        cfg.episode_steps,
        derive_seed(cfg.seed, 200 + e),
        plant.dt,
    )?;
    let plant = Plant::with_initial(plant.clone(), derive_seed(cfg.seed, 100 + e), initial)?;
    Ok((plant, reference))
}

/// Deterministic training: one control step, then one train iteration,
/// interleaved on the calling thread.
pub fn train_agent<T: Real>(
    agent: &mut DrlAgent<T>,
    plant_cfg: &PlantConfig,
    mut observer: impl FnMut(&TrainingRecord) -> Result<()>,
) -> Result<TrainingSummary> {
    let cfg = agent.config.clone();
    let mut summary = TrainingSummary::default();
    let mut step = 0usize;
    while step < cfg.train_steps {
        let (mut plant, reference) = training_episode(&cfg, plant_cfg, summary.episodes, agent.neutral_command())?;
        agent.begin_episode();
        let mut out = plant.step(agent.neutral_command());
        let len = cfg.episode_steps.min(cfg.train_steps - step);
        for t in 0..len {
            let obs = Observation::from_step(&out, &reference, t);
            let reward = compute_reward(
                out.diameter_measured,
                reference.at(t),
                out.feed_cmd,
                cfg.reward_alpha,
                cfg.reward_offset,
            );
            let ctl = agent.control_step(obs, reward)?;
            let stats: Option<TrainStats> = agent.train()?;
            summary.iterations += u64::from(stats.is_some());
            summary.rewards.push(reward);
            summary.commands.push(ctl.command);
            observer(&TrainingRecord {
                step: step as u64,
                episode: summary.episodes,
                reward,
                critic_loss: stats.map(|s| s.critic_loss),
                actor_step: stats.map(|s| s.actor_step),
                sigma: agent.control.noise.sigma_t(),
            })?;
            out = plant.step(ctl.command);
            step += 1;
        }
        summary.episodes += 1;
    }
    Ok(summary)
}

/// Free-running variant: a train thread samples memory and publishes actor
/// snapshots while the calling thread runs the plant. The control loop
/// waits whenever it gets more than `max_lag` steps ahead of training.
/// Results depend on thread scheduling.
pub fn train_agent_threaded<T: Real>(
    agent: &mut DrlAgent<T>,
    plant_cfg: &PlantConfig,
    max_lag: u64,
    mut observer: impl FnMut(&TrainingRecord) -> Result<()>,
) -> Result<TrainingSummary> {
    let cfg = agent.config.clone();
    let window = cfg.window;
    let neutral = agent.neutral_command();
    let encoder = agent.learner.encoder.clone();
    let DrlAgent {
        learner,
        memory,
        control,
        map,
        sample_rng,
        ..
    } = agent;
    let shared = Mutex::new(std::mem::replace(memory, HistoryMemory::new(1)));
    let snapshot = RwLock::new(Arc::new(learner.actor.clone()));
    let stop = AtomicBool::new(false);
    let iterations = AtomicU64::new(0);
    let batch = learner.batch_size;

    let mut summary = TrainingSummary::default();
    let outcome = std::thread::scope(|scope| -> Result<()> {
        let trainer = scope.spawn(|| -> Result<()> {
            while !stop.load(Ordering::Acquire) {
                let slices = shared.lock().expect("memory lock").sample(sample_rng, batch, window);
                let Some(slices) = slices else {
                    std::thread::yield_now();
                    continue;
                };
                learner.update(&slices)?;
                *snapshot.write().expect("snapshot lock") = Arc::new(learner.actor.clone());
                iterations.fetch_add(1, Ordering::AcqRel);
            }
            Ok(())
        });

        let control_result = (|| -> Result<()> {
            let mut step = 0usize;
            let mut ready_steps = 0u64;
            while step < cfg.train_steps {
                let (mut plant, reference) = training_episode(&cfg, plant_cfg, summary.episodes, neutral)?;
                control.begin_episode();
                shared.lock().expect("memory lock").begin_episode();
                let mut out = plant.step(neutral);
                for t in 0..cfg.episode_steps.min(cfg.train_steps - step) {
                    let obs = Observation::from_step(&out, &reference, t);
                    let reward = compute_reward(
                        out.diameter_measured,
                        reference.at(t),
                        out.feed_cmd,
                        cfg.reward_alpha,
                        cfg.reward_offset,
                    );
                    let actor = Arc::clone(&snapshot.read().expect("snapshot lock"));
                    let ctl = control.step(actor.as_ref(), &encoder, map, obs, reward)?;
                    let ready = {
                        let mut m = shared.lock().expect("memory lock");
                        m.push(ctl.transition);
                        m.is_ready(window)
                    };
                    ready_steps += u64::from(ready);
                    while ready_steps > iterations.load(Ordering::Acquire) + max_lag && !trainer.is_finished() {
                        std::thread::yield_now();
                    }
                    summary.rewards.push(reward);
                    summary.commands.push(ctl.command);
                    observer(&TrainingRecord {
                        step: step as u64,
                        episode: summary.episodes,
                        reward,
                        critic_loss: None,
                        actor_step: None,
                        sigma: control.noise.sigma_t(),
                    })?;
                    out = plant.step(ctl.command);
                    step += 1;
                }
                summary.episodes += 1;
            }
            Ok(())
        })();
        stop.store(true, Ordering::Release);
        let train_result = trainer.join().expect("train thread panicked");
        control_result.and(train_result)
    });
    *memory = shared.into_inner().expect("memory lock");
    summary.iterations = iterations.load(Ordering::Acquire);
    outcome.map(|()| summary)
}
