use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::AgentConfig;
use super::controller::DrlAgent;
use super::memory::MemoryCursor;
use super::noise::OuNoiseState;
use crate::error::{Error, Result};
use crate::nn::{AdamState, NetworkCheckpoint, Real};
use crate::plant::PlantConfig;

pub const AGENT_FORMAT: &str = "fiberdraw.agent.v1";

/// Networks, optimizer moments, exploration state and the memory cursor.
/// Memory contents are not saved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub config: AgentConfig,
    pub plant: PlantConfig,
    pub actor: NetworkCheckpoint,
    pub critic: NetworkCheckpoint,
    pub target_actor: NetworkCheckpoint,
    pub target_critic: NetworkCheckpoint,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub noise: OuNoiseState,
    pub memory: MemoryCursor,
    pub steps: u64,
}

impl AgentCheckpoint {
    pub fn capture<T: Real>(agent: &DrlAgent<T>) -> Self {
        let l = &agent.learner;
        let (seed, steps) = (agent.config.seed, agent.control.steps);
        Self {
            format: AGENT_FORMAT.to_string(),
            config: agent.config.clone(),
            plant: agent.map.plant.clone(),
            actor: NetworkCheckpoint::capture(&l.actor, seed, steps),
            critic: NetworkCheckpoint::capture(&l.critic, seed, steps),
            target_actor: NetworkCheckpoint::capture(&l.target_actor, seed, steps),
            target_critic: NetworkCheckpoint::capture(&l.target_critic, seed, steps),
            actor_adam: l.actor_adam.clone(),
            critic_adam: l.critic_adam.clone(),
            noise: agent.control.noise.clone(),
            memory: agent.memory.cursor(),
            steps,
        }
    }

    pub fn restore<T: Real>(&self) -> Result<DrlAgent<T>> {
        if self.format != AGENT_FORMAT {
            return Err(Error::Config(format!("unknown agent checkpoint format `{}`", self.format)));
        }
        let mut agent = DrlAgent::<T>::new(self.config.clone(), &self.plant)?;
        let l = &mut agent.learner;
        for (slot, ck) in [
            (&mut l.actor, &self.actor),
            (&mut l.critic, &self.critic),
            (&mut l.target_actor, &self.target_actor),
            (&mut l.target_critic, &self.target_critic),
        ] {
            let p = ck.restore::<T>()?;
            if p.shape() != slot.shape() {
                return Err(Error::Incompatible("checkpoint network shape differs from config".into()));
            }
            *slot = p;
        }
        l.actor_adam = self.actor_adam.clone();
        l.critic_adam = self.critic_adam.clone();
        agent.control.noise = self.noise.clone();
        agent.control.steps = self.steps;
        Ok(agent)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::training::train_agent;

    #[test]
    fn round_trip_preserves_behaviour() {
        let plant = PlantConfig::default();
        let cfg = AgentConfig {
            window: 3,
            actor_hidden: vec![4],
            critic_hidden: vec![4],
            batch_size: 2,
            train_steps: 20,
            precision: crate::agent::Precision::F32,
            ..AgentConfig::default()
        };
        let mut agent = DrlAgent::<f32>::new(cfg, &plant).unwrap();
        train_agent(&mut agent, &plant, |_| Ok(())).unwrap();
        let ck = AgentCheckpoint::capture(&agent);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        ck.save(&path).unwrap();
        let back = AgentCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let restored = back.restore::<f32>().unwrap();
        assert_eq!(restored.learner.actor.data(), agent.learner.actor.data());
        assert_eq!(restored.learner.critic_adam, agent.learner.critic_adam);
        assert_eq!(restored.control.noise, agent.control.noise);
        assert!(back.restore::<f64>().is_err());
    }
}
