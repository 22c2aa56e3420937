use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pi::{PiConfig, PiController, PiGains};
use crate::error::{Error, Result};
use crate::par;
use crate::plant::{Plant, PlantConfig};
use crate::trajectories::{three_step, ReferenceTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particle_count: usize,
    pub max_iter: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity cap as a fraction of each bound's width.
    pub velocity_limit: f64,
    /// `[kp_lo, kp_hi]`
    pub kp_bounds: [f64; 2],
    pub ki_bounds: [f64; 2],
    /// Objective reference: these levels, `segment` steps each.
    pub levels: Vec<f64>,
    pub segment: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particle_count: 10,
            max_iter: 15,
            inertia_start: 0.9,
            inertia_end: 0.4,
            cognitive: 2.0,
            social: 2.0,
            velocity_limit: 0.2,
            kp_bounds: [0.0, 0.2],
            ki_bounds: [0.0, 0.2],
            levels: vec![450.0, 550.0, 350.0, 450.0],
            segment: 200,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particle_count < 1 || self.max_iter < 1 {
            return Err(Error::Config("PSO needs at least one particle and one iteration".into()));
        }
        for b in [self.kp_bounds, self.ki_bounds] {
            if !(b[0].is_finite() && b[1].is_finite() && b[0] <= b[1]) {
                return Err(Error::Config(format!("bad PSO bounds {b:?}")));
            }
        }
        Ok(())
    }

    pub fn objective_reference(&self, dt: f64) -> Result<ReferenceTrajectory> {
        three_step(&self.levels, self.segment, dt)
    }

    /// Inertia weight for iteration `k`, falling linearly.
    pub fn inertia(&self, k: usize) -> f64 {
        if self.max_iter <= 1 {
            return self.inertia_start;
        }
        let frac = k as f64 / (self.max_iter - 1) as f64;
        self.inertia_start + (self.inertia_end - self.inertia_start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoIteration {
    pub iteration: usize,
    pub inertia: f64,
    pub best_value: f64,
    pub best: PiGains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub gains: PiGains,
    pub rmse: f64,
    pub trace: Vec<PsoIteration>,
    pub seed: u64,
}

/// Modified particle swarm minimizing `objective` over the `(kp, ki)` box.
/// Particles are evaluated in parallel; results do not depend on the
/// thread count.
pub fn pso_minimize(
    cfg: &PsoConfig,
    seed: u64,
    objective: impl Fn(PiGains) -> f64 + Sync + Send,
) -> Result<PsoResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = [cfg.kp_bounds, cfg.ki_bounds];
    let width = bounds.map(|b| b[1] - b[0]);
    let vmax = width.map(|w| w * cfg.velocity_limit);
    let mut pos: Vec<[f64; 2]> = (0..cfg.particle_count)
        .map(|_| [0, 1].map(|d| bounds[d][0] + width[d] * rng.random::<f64>()))
        .collect();
    let mut vel: Vec<[f64; 2]> = (0..cfg.particle_count)
        .map(|_| [0, 1].map(|d| vmax[d] * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    let score = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut pbest = pos.clone();
    let mut pbest_val = vec![f64::INFINITY; cfg.particle_count];
    let mut gbest = pos[0];
    let mut gbest_val = f64::INFINITY;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    for k in 0..cfg.max_iter {
        let vals = par::map(&pos, |p| score(objective(PiGains { kp: p[0], ki: p[1] })));
        for (i, &v) in vals.iter().enumerate() {
            if v < pbest_val[i] {
                pbest_val[i] = v;
                pbest[i] = pos[i];
            }
            if v < gbest_val {
                gbest_val = v;
                gbest = pos[i];
            }
        }
        let w = cfg.inertia(k);
        trace.push(PsoIteration {
            iteration: k,
            inertia: w,
            best_value: gbest_val,
            best: PiGains {
                kp: gbest[0],
                ki: gbest[1],
            },
        });
        if k + 1 == cfg.max_iter {
            break;
        }
        for i in 0..cfg.particle_count {
            for d in 0..2 {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = w * vel[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + cfg.social * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                let x = pos[i][d] + vel[i][d];
                if x < bounds[d][0] || x > bounds[d][1] {
                    vel[i][d] = 0.0;
                }
                pos[i][d] = x.clamp(bounds[d][0], bounds[d][1]);
            }
        }
    }
    if !gbest_val.is_finite() {
        return Err(Error::SwarmDiverged);
    }
    Ok(PsoResult {
        gains: PiGains {
            kp: gbest[0],
            ki: gbest[1],
        },
        rmse: gbest_val,
        trace,
        seed,
    })
}

/// Tracking RMSE (µm) of a PI loop on `reference`, measured against the
/// sensor reading.
pub fn pi_tracking_rmse(
    gains: PiGains,
    pi: PiConfig,
    plant_cfg: &PlantConfig,
    reference: &ReferenceTrajectory,
    seed: u64,
) -> Result<f64> {
    let mut ctl = PiController::new(gains, pi, reference.at(0), plant_cfg)?;
    let init = ctl.initial_command(plant_cfg);
    let mut plant = Plant::with_initial(plant_cfg.clone(), seed, init)?;
    let mut out = plant.step(init);
    let mut se = 0.0;
    for t in 0..reference.len() {
        let d_ref = reference.at(t);
        se += (out.diameter_measured - d_ref).powi(2);
        let cmd = ctl.command(d_ref, out.diameter_measured, plant_cfg);
        out = plant.step(cmd);
    }
    Ok((se / reference.len() as f64).sqrt())
}

/// PSO over PI gains on the three-step objective trajectory. The plant
/// noise seed is shared by all particles so the objective is deterministic.
pub fn pso_tune(pso: &PsoConfig, pi: PiConfig, plant_cfg: &PlantConfig, seed: u64) -> Result<PsoResult> {
    let reference = pso.objective_reference(plant_cfg.dt)?;
    pso_minimize(pso, seed, |g| {
        pi_tracking_rmse(g, pi, plant_cfg, &reference, seed).unwrap_or(f64::INFINITY)
    })
}
