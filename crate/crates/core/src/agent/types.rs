use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ActuatorCommand, StepOutput};
use crate::trajectories::{ReferenceTrajectory, FUTURE_OFFSETS};

pub const REF_COUNT: usize = FUTURE_OFFSETS.len();
/// Spool speed, diameter, fed length, then the references.
pub const OBS_FEATURES: usize = 3 + REF_COUNT;
pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// rad/s
    pub omega: f64,
    /// µm, as measured
    pub diameter: f64,
    /// mm fed since the episode began
    pub fed_length_sum: f64,
    /// µm, current and future references at [`FUTURE_OFFSETS`]
    pub refs: [f64; REF_COUNT],
}

impl Observation {
    pub fn new(omega: f64, diameter: f64, fed_length_sum: f64, refs: [f64; REF_COUNT]) -> Result<Self> {
        let o = Self {
            omega,
            diameter,
            fed_length_sum,
            refs,
        };
        if !o.is_finite() {
            return Err(Error::NonFinite(format!("observation {o:?}")));
        }
        Ok(o)
    }

    /// What the controller sees at step `t` after the plant produced `out`.
    pub fn from_step(out: &StepOutput, reference: &ReferenceTrajectory, t: usize) -> Self {
        Self {
            omega: out.omega_measured,
            diameter: out.diameter_measured,
            fed_length_sum: out.cumulative_fed_length,
            refs: reference.future_refs(t),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite()
            && self.diameter.is_finite()
            && self.fed_length_sum.is_finite()
            && self.refs.iter().all(|r| r.is_finite())
    }
}

/// Agent action in scaled units. Values outside [0, 100] are legal here;
/// only actuation clamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub spool_input: f64,
    pub extruder_input: f64,
}

impl Action {
    pub fn new(spool_input: f64, extruder_input: f64) -> Self {
        Self {
            spool_input,
            extruder_input,
        }
    }

    pub fn to_array(self) -> [f64; ACTION_DIM] {
        [self.spool_input, self.extruder_input]
    }

    pub fn from_array(a: [f64; ACTION_DIM]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn clamped(self) -> Self {
        let c = ActuatorCommand::new(self.spool_input, self.extruder_input).clamped();
        Self::new(c.spool_input, c.extruder_input)
    }
}

/// `−|d − d_ref|/100 + α·f + C` with diameters in µm and feed in mm/s.
pub fn compute_reward(diameter: f64, reference: f64, feed: f64, alpha: f64, offset: f64) -> f64 {
    -(diameter - reference).abs() / 100.0 + alpha * feed + offset
}
