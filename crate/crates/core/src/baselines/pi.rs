use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plant::{feed_to_extruder_input, ActuatorCommand, PlantConfig};

use super::open_loop::open_loop_command;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    /// Spool input per µm of error.
    pub kp: f64,
    /// Spool input per µm·s of integrated error.
    pub ki: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    /// mm/s, held constant.
    pub feed: f64,
    /// Bound on |∫e dt| in µm·s.
    pub integrator_limit: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            feed: 0.37,
            integrator_limit: 2000.0,
        }
    }
}

/// `u = bias + kp·e + ki·∫e` with `e = d_measured − d_ref`, so a thick
/// fiber speeds the spool up. Returns the clamped spool input and the
/// updated integrator.
pub fn pi_step(
    gains: PiGains,
    bias: f64,
    d_ref: f64,
    d_measured: f64,
    integrator: f64,
    dt: f64,
    integrator_limit: f64,
) -> (f64, f64) {
    let e = d_measured - d_ref;
    let integ = (integrator + e * dt).clamp(-integrator_limit, integrator_limit);
    let u = bias + gains.kp * e + gains.ki * integ;
    (u.clamp(0.0, 100.0), integ)
}

/// PI on the spool with the extruder held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub gains: PiGains,
    pub config: PiConfig,
    pub bias: f64,
    pub integrator: f64,
}

impl PiController {
    /// Bias from the open-loop command for the first reference value.
    pub fn new(gains: PiGains, config: PiConfig, d_ref0: f64, plant: &PlantConfig) -> Result<Self> {
        let bias = open_loop_command(d_ref0, config.feed, plant.spool_radius_0, plant)?.spool_input;
        Ok(Self {
            gains,
            config,
            bias,
            integrator: 0.0,
        })
    }

    pub fn initial_command(&self, plant: &PlantConfig) -> ActuatorCommand {
        ActuatorCommand::new(self.bias, feed_to_extruder_input(self.config.feed, plant)).clamped()
    }

    pub fn command(&mut self, d_ref: f64, d_measured: f64, plant: &PlantConfig) -> ActuatorCommand {
        let (u, integ) = pi_step(
            self.gains,
            self.bias,
            d_ref,
            d_measured,
            self.integrator,
            plant.dt,
            self.config.integrator_limit,
        );
        self.integrator = integ;
        ActuatorCommand::new(u, feed_to_extruder_input(self.config.feed, plant)).clamped()
    }
}
