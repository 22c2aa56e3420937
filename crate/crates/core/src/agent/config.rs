use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{join_list, KvMap};

/// How actor gradients are redirected near the action bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvertMode {
    /// Only out-of-range actions pushed further out are rescaled.
    Literal,
    /// Rescale everywhere by the remaining headroom toward the bound the
    /// gradient points at.
    Everywhere,
}

impl fmt::Display for InvertMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::Everywhere => "everywhere",
        })
    }
}

impl FromStr for InvertMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "everywhere" => Ok(Self::Everywhere),
            other => Err(Error::Config(format!("unknown invert mode `{other}`"))),
        }
    }
}

/// Element type used for network parameters and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(Error::Config(format!("unknown precision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Minibatch size N.
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Soft target update rate.
    pub tau: f64,
    pub gamma: f64,
    /// Window length L.
    pub window: usize,
    pub when_labels: bool,
    pub when_label_max: f64,
    /// Spool action is a speed fraction linearized through the fitted
    /// duty curve, rather than the raw duty input.
    pub linear_map: bool,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub forget_bias: f64,
    /// Global gradient norm clip, 0 disables.
    pub grad_clip: f64,
    pub memory_capacity: usize,
    pub ou_sigma: f64,
    pub ou_theta: f64,
    pub ou_decay: f64,
    pub ou_dt: f64,
    pub ou_mean: f64,
    /// s/mm
    pub reward_alpha: f64,
    pub reward_offset: f64,
    pub invert_mode: InvertMode,
    /// Critic output is `q_scale · y` for network output y.
    pub q_scale: f64,
    /// µm per unit network input.
    pub diameter_scale: f64,
    pub neutral_spool: f64,
    pub neutral_extruder: f64,
    pub precision: Precision,
    pub seed: u64,
    /// Total control steps of a training run.
    pub train_steps: usize,
    pub episode_steps: usize,
    /// Training reference: random steps every `train_ref_interval` steps.
    pub train_ref_interval: usize,
    pub train_ref_lo: f64,
    pub train_ref_hi: f64,
    /// Points sampled from the duty curve when fitting the speed map.
    pub speed_map_points: usize,
    pub speed_map_degree: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            actor_lr: 1e-6,
            critic_lr: 5e-6,
            tau: 0.05,
            gamma: 0.99,
            window: 50,
            when_labels: true,
            when_label_max: 100.0,
            linear_map: true,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            forget_bias: 1.0,
            grad_clip: 0.0,
            memory_capacity: 75_000,
            ou_sigma: 10.0,
            ou_theta: 0.1,
            ou_decay: 0.999925,
            ou_dt: 1.0,
            ou_mean: 0.0,
            reward_alpha: 0.106,
            reward_offset: 1.0,
            invert_mode: InvertMode::Literal,
            q_scale: 100.0,
            diameter_scale: 600.0,
            neutral_spool: 50.0,
            neutral_extruder: 50.0,
            precision: Precision::F32,
            seed: 0,
            train_steps: 50_000,
            episode_steps: 4_800,
            train_ref_interval: 120,
            train_ref_lo: 300.0,
            train_ref_hi: 600.0,
            speed_map_points: 25,
            speed_map_degree: 3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() {
            return bad("networks need at least one recurrent layer");
        }
        if self.memory_capacity < self.window + 2 {
            return bad("memory_capacity must hold at least one slice of window + 2");
        }
        if !(self.ou_sigma >= 0.0 && self.ou_theta >= 0.0 && self.ou_dt > 0.0) {
            return bad("OU parameters must be non-negative with ou_dt > 0");
        }
        if !(self.ou_decay > 0.0 && self.ou_decay <= 1.0) {
            return bad("ou_decay must lie in (0, 1]");
        }
        if self.reward_alpha < 0.0 {
            return bad("reward_alpha must be non-negative");
        }
        if !(self.q_scale > 0.0 && self.diameter_scale > 0.0) {
            return bad("output and feature scales must be positive");
        }
        if self.episode_steps == 0 || self.train_ref_interval == 0 {
            return bad("episode_steps and train_ref_interval must be positive");
        }
        if !(self.train_ref_lo > 0.0 && self.train_ref_lo < self.train_ref_hi) {
            return bad("training reference range must be positive and non-empty");
        }
        if self.speed_map_points <= self.speed_map_degree {
            return bad("speed map needs more points than its degree");
        }
        Ok(())
    }

    pub fn from_kv(kv: &mut KvMap) -> Result<Self> {
        let mut c = Self::default();
        kv.take("batch_size", &mut c.batch_size)?;
        kv.take("actor_lr", &mut c.actor_lr)?;
        kv.take("critic_lr", &mut c.critic_lr)?;
        kv.take("tau", &mut c.tau)?;
        kv.take("gamma", &mut c.gamma)?;
        kv.take("window", &mut c.window)?;
        kv.take("when_labels", &mut c.when_labels)?;
        kv.take("when_label_max", &mut c.when_label_max)?;
        kv.take("linear_map", &mut c.linear_map)?;
        kv.take_list("actor_hidden", &mut c.actor_hidden)?;
        kv.take_list("critic_hidden", &mut c.critic_hidden)?;
        kv.take("forget_bias", &mut c.forget_bias)?;
        kv.take("grad_clip", &mut c.grad_clip)?;
        kv.take("memory_capacity", &mut c.memory_capacity)?;
        kv.take("ou_sigma", &mut c.ou_sigma)?;
        kv.take("ou_theta", &mut c.ou_theta)?;
        kv.take("ou_decay", &mut c.ou_decay)?;
        kv.take("ou_dt", &mut c.ou_dt)?;
        kv.take("ou_mean", &mut c.ou_mean)?;
        kv.take("reward_alpha", &mut c.reward_alpha)?;
        kv.take("reward_offset", &mut c.reward_offset)?;
        kv.take("invert_mode", &mut c.invert_mode)?;
        kv.take("q_scale", &mut c.q_scale)?;
        kv.take("diameter_scale", &mut c.diameter_scale)?;
        kv.take("neutral_spool", &mut c.neutral_spool)?;
        kv.take("neutral_extruder", &mut c.neutral_extruder)?;
        kv.take("precision", &mut c.precision)?;
        kv.take("seed", &mut c.seed)?;
        kv.take("train_steps", &mut c.train_steps)?;
        kv.take("episode_steps", &mut c.episode_steps)?;
        kv.take("train_ref_interval", &mut c.train_ref_interval)?;
        kv.take("train_ref_lo", &mut c.train_ref_lo)?;
        kv.take("train_ref_hi", &mut c.train_ref_hi)?;
        kv.take("speed_map_points", &mut c.speed_map_points)?;
        kv.take("speed_map_degree", &mut c.speed_map_degree)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut kv = KvMap::load(path)?;
        let c = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(c)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("batch_size", self.batch_size.to_string());
        put("actor_lr", self.actor_lr.to_string());
        put("critic_lr", self.critic_lr.to_string());
        put("tau", self.tau.to_string());
        put("gamma", self.gamma.to_string());
        put("window", self.window.to_string());
        put("when_labels", self.when_labels.to_string());
        put("when_label_max", self.when_label_max.to_string());
        put("linear_map", self.linear_map.to_string());
        put("actor_hidden", join_list(&self.actor_hidden));
        put("critic_hidden", join_list(&self.critic_hidden));
        put("forget_bias", self.forget_bias.to_string());
        put("grad_clip", self.grad_clip.to_string());
        put("memory_capacity", self.memory_capacity.to_string());
        put("ou_sigma", self.ou_sigma.to_string());
        put("ou_theta", self.ou_theta.to_string());
        put("ou_decay", self.ou_decay.to_string());
        put("ou_dt", self.ou_dt.to_string());
        put("ou_mean", self.ou_mean.to_string());
        put("reward_alpha", self.reward_alpha.to_string());
        put("reward_offset", self.reward_offset.to_string());
        put("invert_mode", self.invert_mode.to_string());
        put("q_scale", self.q_scale.to_string());
        put("diameter_scale", self.diameter_scale.to_string());
        put("neutral_spool", self.neutral_spool.to_string());
        put("neutral_extruder", self.neutral_extruder.to_string());
        put("precision", self.precision.to_string());
        put("seed", self.seed.to_string());
        put("train_steps", self.train_steps.to_string());
        put("episode_steps", self.episode_steps.to_string());
        put("train_ref_interval", self.train_ref_interval.to_string());
        put("train_ref_lo", self.train_ref_lo.to_string());
        put("train_ref_hi", self.train_ref_hi.to_string());
        put("speed_map_points", self.speed_map_points.to_string());
        put("speed_map_degree", self.speed_map_degree.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AgentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.batch_size, c.window, c.memory_capacity), (32, 50, 75_000));
        assert_eq!((c.actor_lr, c.critic_lr, c.tau, c.gamma), (1e-6, 5e-6, 0.05, 0.99));
        assert_eq!((c.ou_sigma, c.ou_theta, c.ou_decay), (10.0, 0.1, 0.999925));
    }

    #[test]
    fn kv_round_trip() {
        let mut c = AgentConfig::default();
        c.window = 7;
        c.when_labels = false;
        c.invert_mode = InvertMode::Everywhere;
        c.precision = Precision::F64;
        c.actor_hidden = vec![8];
        let mut kv = KvMap::parse(&c.to_kv_string()).unwrap();
        let back = AgentConfig::from_kv(&mut kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in ["gamma = 1.0", "window = 0", "batch_size = 0", "tau = 0", "precision = f16"] {
            let mut kv = KvMap::parse(text).unwrap();
            assert!(AgentConfig::from_kv(&mut kv).is_err(), "{text}");
        }
    }
}
