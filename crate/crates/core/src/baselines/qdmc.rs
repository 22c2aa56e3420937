use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ident::{command_for_inputs, inputs_for_command, ChannelResponse, StepResponseModel};
use crate::error::{Error, Result};
use crate::plant::{ActuatorCommand, PlantConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdmcConfig {
    /// Prediction horizon `p` in steps.
    pub prediction_horizon: usize,
    /// Moves per channel `c`.
    pub control_horizon: usize,
    /// Move suppression, in units of (100 µm)² per normalized move².
    pub move_suppression: f64,
}

impl Default for QdmcConfig {
    fn default() -> Self {
        Self {
            prediction_horizon: 50,
            control_horizon: 25,
            move_suppression: 40.0,
        }
    }
}

impl QdmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prediction_horizon == 0 || self.control_horizon == 0 {
            return Err(Error::Config("QDMC horizons must be positive".into()));
        }
        if self.control_horizon > self.prediction_horizon {
            return Err(Error::Config("control horizon exceeds prediction horizon".into()));
        }
        if !(self.move_suppression >= 0.0 && self.move_suppression.is_finite()) {
            return Err(Error::Config("move suppression must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Weight in µm² per normalized move².
    pub fn effective_suppression(&self) -> f64 {
        self.move_suppression * 1e4
    }
}

/// `p × c·n` dynamic matrix with block `m` holding `A[j][k] = s_{j+1−k}`
/// for channel `m`'s `k`-th future move.
pub fn build_dynamic_matrix(responses: &[&ChannelResponse], p: usize, c: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(p, c * responses.len());
    for (m, r) in responses.iter().enumerate() {
        for j in 0..p {
            for k in 0..c.min(j + 1) {
                a[(j, m * c + k)] = r.at(j + 1 - k);
            }
        }
    }
    a
}

/// `‖e − AΔu‖² + r‖Δu‖²`
pub fn qdmc_objective(a: &DMatrix<f64>, error: &DVector<f64>, moves: &DVector<f64>, r: f64) -> f64 {
    (error - a * moves).norm_squared() + r * moves.norm_squared()
}

/// Minimizer of [`qdmc_objective`].
pub fn qdmc_solve(a: &DMatrix<f64>, error: &DVector<f64>, r: f64) -> Result<DVector<f64>> {
    let mut h = a.transpose() * a;
    for i in 0..h.nrows() {
        h[(i, i)] += r;
    }
    let g = a.transpose() * error;
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(&g));
    }
    h.svd(true, true)
        .solve(&g, 1e-12)
        .map_err(|e| Error::Singular(e.to_string()))
}

/// Unconstrained quadratic dynamic matrix controller with input clamping.
#[derive(Debug, Clone)]
pub struct Qdmc {
    config: QdmcConfig,
    model: StepResponseModel,
    plant: PlantConfig,
    a: DMatrix<f64>,
    /// Open-loop prediction `ŷ(t+1) … ŷ(t+p)` from past moves.
    prediction: Vec<f64>,
    inputs: [f64; 2],
    initialized: bool,
}

impl Qdmc {
    pub fn new(config: QdmcConfig, model: StepResponseModel, plant: PlantConfig) -> Result<Self> {
        config.validate()?;
        let a = build_dynamic_matrix(
            &[&model.feed, &model.spool],
            config.prediction_horizon,
            config.control_horizon,
        );
        Ok(Self {
            prediction: vec![0.0; config.prediction_horizon + 1],
            config,
            model,
            a,
            inputs: inputs_for_command(plant.initial_command(), &plant),
            plant,
            initialized: false,
        })
    }

    pub fn config(&self) -> &QdmcConfig {
        &self.config
    }

    pub fn dynamic_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn inputs(&self) -> [f64; 2] {
        self.inputs
    }

    /// Starts from the given command; predictions are relative to the first
    /// measurement.
    pub fn reset(&mut self, initial: ActuatorCommand) {
        self.inputs = inputs_for_command(initial, &self.plant);
        self.prediction.iter_mut().for_each(|v| *v = 0.0);
        self.initialized = false;
    }

    fn apply_moves(&mut self, moves: [f64; 2]) {
        let n = self.prediction.len();
        for (m, r) in [&self.model.feed, &self.model.spool].into_iter().enumerate() {
            if moves[m] != 0.0 {
                for (j, y) in self.prediction.iter_mut().enumerate().take(n) {
                    *y += r.at(j) * moves[m];
                }
            }
        }
    }

    /// Next command for a measured diameter and a reference held over the
    /// horizon. Moves that would leave [0, 1] are clipped before they enter
    /// the prediction.
    pub fn step(&mut self, measured: f64, reference: &[f64]) -> Result<ActuatorCommand> {
        let p = self.config.prediction_horizon;
        let c = self.config.control_horizon;
        if !self.initialized {
            self.prediction.iter_mut().for_each(|v| *v = measured);
            self.initialized = true;
        } else {
            // shift: ŷ(t) ← ŷ(t+1)
            self.prediction.rotate_left(1);
            let last = self.prediction.len() - 1;
            self.prediction[last] = self.prediction[last - 1];
        }
        let disturbance = measured - self.prediction[0];
        let error = DVector::from_fn(p, |j, _| {
            let target = reference.get(j).or(reference.last()).copied().unwrap_or(measured);
            target - self.prediction[j + 1] - disturbance
        });
        let du = qdmc_solve(&self.a, &error, self.config.effective_suppression())?;
        if du.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QDMC move".into()));
        }
        let mut applied = [0.0; 2];
        for m in 0..2 {
            let next = (self.inputs[m] + du[m * c]).clamp(0.0, 1.0);
            applied[m] = next - self.inputs[m];
            self.inputs[m] = next;
        }
        self.apply_moves(applied);
        Ok(command_for_inputs(self.inputs, &self.plant))
    }
}
