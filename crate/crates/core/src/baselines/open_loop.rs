use crate::error::{Error, Result};
use crate::plant::{feed_to_extruder_input, speed_to_spool_input, ActuatorCommand, PlantConfig};

/// Spool speed that mass conservation predicts will draw `d_target` µm at
/// feed `feed` on a spool of radius `radius` (mm).
pub fn open_loop_speed(d_target: f64, feed: f64, radius: f64, config: &PlantConfig) -> Result<f64> {
    if !(d_target > 0.0 && feed > 0.0 && radius > 0.0) {
        return Err(Error::Domain(format!(
            "open loop needs positive diameter, feed and radius (d={d_target}, f={feed}, r={radius})"
        )));
    }
    let ratio = config.preform_diameter / d_target;
    Ok(feed * ratio * ratio / radius)
}

/// Command that holds `feed` and sets the spool for `d_target` on a spool
/// of fixed radius. Speeds outside the operable range are clamped.
pub fn open_loop_command(d_target: f64, feed: f64, radius: f64, config: &PlantConfig) -> Result<ActuatorCommand> {
    let omega = open_loop_speed(d_target, feed, radius, config)?;
    let (lo, hi) = (config.omega_min(), config.omega_max);
    if omega < lo || omega > hi {
        log::warn!("open-loop speed {omega:.3} rad/s outside [{lo:.3}, {hi:.3}], clamped");
    }
    Ok(ActuatorCommand::new(
        speed_to_spool_input(omega.clamp(lo, hi), config),
        feed_to_extruder_input(feed, config),
    )
    .clamped())
}

/// Mass-conservation controller: fixed feed, spool set from the reference
/// with the radius frozen at its start-of-run value.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop {
    pub feed: f64,
    pub radius: f64,
}

impl OpenLoop {
    pub fn new(feed: f64, radius: f64) -> Self {
        Self { feed, radius }
    }

    pub fn command(&self, d_ref: f64, config: &PlantConfig) -> Result<ActuatorCommand> {
        open_loop_command(d_ref, self.feed, self.radius, config)
    }
}
