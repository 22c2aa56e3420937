use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::AgentConfig;
use super::encode::WindowEncoder;
use super::learner::{train_iteration, Learner, TrainStats};
use super::memory::{HistoryMemory, RecentHistoryBuffer, Transition};
use super::noise::OuNoiseState;
use super::speed_map::SpeedMap;
use super::types::{Action, Observation};
use crate::error::Result;
use crate::nn::{NetworkParams, Real};
use crate::plant::{ActuatorCommand, PlantConfig};
use crate::seed::derive_seed;

/// Maps agent actions to actuator commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMap {
    pub speed_map: Option<SpeedMap>,
    pub plant: PlantConfig,
}

impl ActionMap {
    pub fn new(cfg: &AgentConfig, plant: &PlantConfig) -> Result<Self> {
        let speed_map = if cfg.linear_map {
            Some(SpeedMap::from_plant(plant, cfg.speed_map_points, cfg.speed_map_degree)?)
        } else {
            None
        };
        Ok(Self {
            speed_map,
            plant: plant.clone(),
        })
    }

    /// Clamp for execution, then linearize the spool channel if enabled.
    pub fn command(&self, action: &Action) -> ActuatorCommand {
        let a = action.clamped();
        let spool = match &self.speed_map {
            Some(m) => m.spool_input_for_fraction(a.spool_input, &self.plant),
            None => a.spool_input,
        };
        ActuatorCommand::new(spool, a.extruder_input).clamped()
    }
}

/// Control-side state: what the control loop owns.
#[derive(Debug, Clone)]
pub struct ControlState {
    pub recent: RecentHistoryBuffer,
    pub noise: OuNoiseState,
    pub last_action: Action,
    pub neutral: Action,
    pub explore: bool,
    pub steps: u64,
    noise_rng: ChaCha8Rng,
}

/// Result of one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub command: ActuatorCommand,
    /// Stored, unclamped `π + ε`.
    pub action: Action,
    pub greedy: Action,
    pub transition: Transition,
}

impl ControlState {
    pub fn new(cfg: &AgentConfig) -> Self {
        Self {
            recent: RecentHistoryBuffer::new(cfg.window),
            noise: OuNoiseState::new(cfg.ou_sigma, cfg.ou_theta, cfg.ou_decay, cfg.ou_dt, cfg.ou_mean),
            last_action: Action::new(cfg.neutral_spool, cfg.neutral_extruder),
            neutral: Action::new(cfg.neutral_spool, cfg.neutral_extruder),
            explore: true,
            steps: 0,
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3)),
        }
    }

    pub fn begin_episode(&mut self) {
        self.recent.clear();
        self.last_action = self.neutral;
    }

    /// `a_t = π(h_t) + ε_t`. The history buffer is primed with the first
    /// observation of an episode.
    pub fn step<T: Real>(
        &mut self,
        actor: &NetworkParams<T>,
        encoder: &WindowEncoder,
        map: &ActionMap,
        observation: Observation,
        reward: f64,
    ) -> Result<ControlOutput> {
        if self.recent.is_empty() {
            self.recent.prime(self.neutral, observation);
        } else {
            self.recent.push(self.last_action, observation);
        }
        let y = actor.predict(&encoder.actor_batch_from_buffer::<T>(&self.recent)?)?;
        let greedy = encoder.action_from_output(&y);
        let action = if self.explore {
            let eps = self.noise.sample(&mut self.noise_rng);
            Action::new(greedy.spool_input + eps[0], greedy.extruder_input + eps[1])
        } else {
            greedy
        };
        self.last_action = action;
        self.steps += 1;
        Ok(ControlOutput {
            command: map.command(&action),
            action,
            greedy,
            transition: Transition {
                reward,
                observation,
                action,
            },
        })
    }
}

/// The complete learning controller.
#[derive(Debug, Clone)]
pub struct DrlAgent<T: Real> {
    pub config: AgentConfig,
    pub learner: Learner<T>,
    pub memory: HistoryMemory,
    pub control: ControlState,
    pub map: ActionMap,
    pub(crate) sample_rng: ChaCha8Rng,
}

impl<T: Real> DrlAgent<T> {
    pub fn new(config: AgentConfig, plant: &PlantConfig) -> Result<Self> {
        let learner = Learner::new(&config, plant)?;
        Ok(Self {
            memory: HistoryMemory::new(config.memory_capacity),
            control: ControlState::new(&config),
            map: ActionMap::new(&config, plant)?,
            sample_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 4)),
            learner,
            config,
        })
    }

    pub fn encoder(&self) -> &WindowEncoder {
        &self.learner.encoder
    }

    pub fn neutral_command(&self) -> ActuatorCommand {
        self.map.command(&self.control.neutral)
    }

    pub fn begin_episode(&mut self) {
        self.control.begin_episode();
        self.memory.begin_episode();
    }

    /// Act on `observation` and record `(r_t, o_t, a_t)` in memory.
    pub fn control_step(&mut self, observation: Observation, reward: f64) -> Result<ControlOutput> {
        let out = self
            .control
            .step(&self.learner.actor, &self.learner.encoder, &self.map, observation, reward)?;
        self.memory.push(out.transition);
        Ok(out)
    }

    /// Act without exploring or recording.
    pub fn act(&mut self, observation: Observation) -> Result<ControlOutput> {
        let explore = std::mem::replace(&mut self.control.explore, false);
        let out = self
            .control
            .step(&self.learner.actor, &self.learner.encoder, &self.map, observation, 0.0);
        self.control.explore = explore;
        out
    }

    pub fn train(&mut self) -> Result<Option<TrainStats>> {
        train_iteration(&mut self.learner, &self.memory, &mut self.sample_rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AgentConfig {
        AgentConfig {
            window: 4,
            actor_hidden: vec![6],
            critic_hidden: vec![6],
            batch_size: 4,
            ..AgentConfig::default()
        }
    }

    fn obs(d: f64) -> Observation {
        Observation {
            omega: 3.0,
            diameter: d,
            fed_length_sum: 1.0,
            refs: [450.0; 6],
        }
    }

    #[test]
    fn decayed_noise_executes_clamped_greedy() {
        let plant = PlantConfig::default();
        let mut agent = DrlAgent::<f64>::new(cfg(), &plant).unwrap();
        agent.control.noise.sigma = 0.0;
        agent.control.noise.reset_value();
        agent.begin_episode();
        for k in 0..10 {
            let out = agent.control_step(obs(400.0 + k as f64), 0.5).unwrap();
            assert_eq!(out.action, out.greedy);
            assert_eq!(out.command, agent.map.command(&out.greedy.clamped()));
        }
        assert_eq!(agent.memory.len(), 10);
    }

    #[test]
    fn stored_action_keeps_out_of_range_values() {
        let plant = PlantConfig::default();
        let mut agent = DrlAgent::<f64>::new(cfg(), &plant).unwrap();
        agent.learner.actor.data_mut().fill(0.0);
        agent.learner.actor.head_mut().1.copy_from_slice(&[1.2, -1.3]);
        agent.control.explore = false;
        agent.begin_episode();
        let out = agent.control_step(obs(400.0), 0.0).unwrap();
        assert!((out.action.spool_input - 110.0).abs() < 1e-12);
        assert!((out.action.extruder_input + 15.0).abs() < 1e-12);
        assert_eq!(agent.memory.get(0).unwrap().action, out.action);
        assert_eq!(out.command.extruder_input, 0.0);
        assert_eq!(out.command, agent.map.command(&Action::new(100.0, 0.0)));
    }

    #[test]
    fn raw_mapping_passes_spool_input_through() {
        let plant = PlantConfig::default();
        let map = ActionMap::new(&AgentConfig { linear_map: false, ..cfg() }, &plant).unwrap();
        assert_eq!(map.command(&Action::new(37.0, 12.0)), ActuatorCommand::new(37.0, 12.0));
        let lin = ActionMap::new(&cfg(), &plant).unwrap();
        assert_ne!(lin.command(&Action::new(37.0, 12.0)).spool_input, 37.0);
    }
}
