//! Discrete-time simulator of the fiber drawing process.
//!
//! Signal path per step: actuator maps, pure transport delay, first-order
//! lag, mass-flow diameter on the lagged signals, multiplicative log-normal
//! sensor noise. The spool's effective radius grows with the wound fiber
//! volume, which makes the plant slowly time-varying.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{join_list, KvMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// µm
    pub preform_diameter: f64,
    /// mm
    pub spool_radius_0: f64,
    /// mm; width over which fiber is wound, sets radius growth per wound length.
    pub fiber_wrap_width: f64,
    /// Disable to make the plant time-invariant.
    pub radius_growth: bool,
    /// s; zero disables the delay.
    pub feed_delay: f64,
    pub spool_delay: f64,
    /// s; zero disables the lag.
    pub feed_lag_tau: f64,
    pub spool_lag_tau: f64,
    /// %; spool input 0 maps here, 100 maps to 100 %.
    pub duty_min_pct: f64,
    /// Polynomial in normalized duty x ∈ [0,1] giving ω / omega_max.
    pub duty_curve: Vec<f64>,
    /// mm/s
    pub feed_min: f64,
    pub feed_max: f64,
    /// rad/s
    pub omega_max: f64,
    pub noise_sigma_rel: f64,
    /// s
    pub dt: f64,
    pub seed: u64,
    /// µm; reported when the spool stalls.
    pub diameter_max: f64,
    pub initial_spool_input: f64,
    pub initial_extruder_input: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            preform_diameter: 7900.0,
            spool_radius_0: 30.0,
            fiber_wrap_width: 60.0,
            radius_growth: true,
            feed_delay: 10.0,
            spool_delay: 1.0,
            feed_lag_tau: 2.0,
            spool_lag_tau: 0.5,
            duty_min_pct: 7.8,
            duty_curve: vec![0.04, 2.3, -1.92, 0.58],
            feed_min: 0.09,
            feed_max: 0.56,
            omega_max: 12.0,
            noise_sigma_rel: 0.02,
            dt: 0.25,
            seed: 0,
            diameter_max: 2000.0,
            initial_spool_input: 10.0,
            initial_extruder_input: 50.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("plant: {msg}")));
        if !(self.feed_min > 0.0 && self.feed_min < self.feed_max) {
            return bad("need 0 < feed_min < feed_max");
        }
        if !(self.duty_min_pct > 0.0 && self.duty_min_pct < 100.0) {
            return bad("duty_min_pct must lie in (0, 100)");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        for (name, v) in [
            ("feed_delay", self.feed_delay),
            ("spool_delay", self.spool_delay),
            ("feed_lag_tau", self.feed_lag_tau),
            ("spool_lag_tau", self.spool_lag_tau),
            ("noise_sigma_rel", self.noise_sigma_rel),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("preform_diameter", self.preform_diameter),
            ("spool_radius_0", self.spool_radius_0),
            ("fiber_wrap_width", self.fiber_wrap_width),
            ("omega_max", self.omega_max),
            ("diameter_max", self.diameter_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and positive"));
            }
        }
        if self.duty_curve.len() < 2 {
            return bad("duty_curve needs at least a constant and a linear coefficient");
        }
        if !(poly_eval(&self.duty_curve, 0.0) > 0.0) {
            return bad("duty_curve must give positive speed at the minimum duty");
        }
        if (poly_eval(&self.duty_curve, 1.0) - 1.0).abs() > 1e-9 {
            return bad("duty_curve must reach 1 (omega_max) at full duty");
        }
        let deriv = poly_derivative(&self.duty_curve);
        let second = poly_derivative(&deriv);
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            if poly_eval(&deriv, x) <= 0.0 {
                return bad("duty_curve must be strictly increasing");
            }
            if poly_eval(&second, x) > 1e-12 {
                return bad("duty_curve must be concave");
            }
        }
        for (name, v) in [
            ("initial_spool_input", self.initial_spool_input),
            ("initial_extruder_input", self.initial_extruder_input),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 100]"));
            }
        }
        Ok(())
    }

    pub fn feed_delay_steps(&self) -> usize {
        steps_for(self.feed_delay, self.dt)
    }

    pub fn spool_delay_steps(&self) -> usize {
        steps_for(self.spool_delay, self.dt)
    }

    /// Slowest spool speed the actuator can hold (spool input 0).
    pub fn omega_min(&self) -> f64 {
        duty_to_speed(self.duty_min_pct, self)
    }

    pub fn initial_command(&self) -> ActuatorCommand {
        ActuatorCommand::new(self.initial_spool_input, self.initial_extruder_input)
    }

    pub fn from_kv(kv: &mut KvMap) -> Result<Self> {
        let mut c = Self::default();
        kv.take("preform_diameter", &mut c.preform_diameter)?;
        kv.take("spool_radius_0", &mut c.spool_radius_0)?;
        kv.take("fiber_wrap_width", &mut c.fiber_wrap_width)?;
        kv.take("radius_growth", &mut c.radius_growth)?;
        kv.take("feed_delay", &mut c.feed_delay)?;
        kv.take("spool_delay", &mut c.spool_delay)?;
        kv.take("feed_lag_tau", &mut c.feed_lag_tau)?;
        kv.take("spool_lag_tau", &mut c.spool_lag_tau)?;
        kv.take("duty_min_pct", &mut c.duty_min_pct)?;
        kv.take_list("duty_curve", &mut c.duty_curve)?;
        kv.take("feed_min", &mut c.feed_min)?;
        kv.take("feed_max", &mut c.feed_max)?;
        kv.take("omega_max", &mut c.omega_max)?;
        kv.take("noise_sigma_rel", &mut c.noise_sigma_rel)?;
        kv.take("dt", &mut c.dt)?;
        kv.take("seed", &mut c.seed)?;
        kv.take("diameter_max", &mut c.diameter_max)?;
        kv.take("initial_spool_input", &mut c.initial_spool_input)?;
        kv.take("initial_extruder_input", &mut c.initial_extruder_input)?;
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
        format!(
            "preform_diameter = {}\nspool_radius_0 = {}\nfiber_wrap_width = {}\nradius_growth = {}\n\
             feed_delay = {}\nspool_delay = {}\nfeed_lag_tau = {}\nspool_lag_tau = {}\n\
             duty_min_pct = {}\nduty_curve = {}\nfeed_min = {}\nfeed_max = {}\nomega_max = {}\n\
             noise_sigma_rel = {}\ndt = {}\nseed = {}\ndiameter_max = {}\n\
             initial_spool_input = {}\ninitial_extruder_input = {}\n",
            self.preform_diameter,
            self.spool_radius_0,
            self.fiber_wrap_width,
            self.radius_growth,
            self.feed_delay,
            self.spool_delay,
            self.feed_lag_tau,
            self.spool_lag_tau,
            self.duty_min_pct,
            join_list(&self.duty_curve),
            self.feed_min,
            self.feed_max,
            self.omega_max,
            self.noise_sigma_rel,
            self.dt,
            self.seed,
            self.diameter_max,
            self.initial_spool_input,
            self.initial_extruder_input,
        )
    }
}

fn steps_for(duration: f64, dt: f64) -> usize {
    // Guard against 10.0 / 0.25 landing a hair above 40.
    let ratio = duration / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

pub(crate) fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

pub(crate) fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

/// Scaled spool and extruder inputs, each nominally in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub spool_input: f64,
    pub extruder_input: f64,
}

impl ActuatorCommand {
    pub fn new(spool_input: f64, extruder_input: f64) -> Self {
        Self {
            spool_input,
            extruder_input,
        }
    }

    pub fn clamped(self) -> Self {
        Self {
            spool_input: clamp_input(self.spool_input),
            extruder_input: clamp_input(self.extruder_input),
        }
    }
}

fn clamp_input(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 100.0)
    }
}

pub fn spool_input_to_duty(spool_input: f64, config: &PlantConfig) -> f64 {
    config.duty_min_pct + (100.0 - config.duty_min_pct) * spool_input / 100.0
}

pub fn duty_to_spool_input(duty: f64, config: &PlantConfig) -> f64 {
    100.0 * (duty - config.duty_min_pct) / (100.0 - config.duty_min_pct)
}

/// Steady spool speed for a PWM duty cycle. Below the minimum duty the motor
/// stalls and the speed is zero.
pub fn duty_to_speed(duty: f64, config: &PlantConfig) -> f64 {
    if duty < config.duty_min_pct {
        return 0.0;
    }
    let x = ((duty - config.duty_min_pct) / (100.0 - config.duty_min_pct)).min(1.0);
    config.omega_max * poly_eval(&config.duty_curve, x)
}

/// Inverse of [`duty_to_speed`] by bisection, clamped to the operable range.
pub fn speed_to_duty(omega: f64, config: &PlantConfig) -> f64 {
    let (mut lo, mut hi) = (config.duty_min_pct, 100.0);
    if omega <= duty_to_speed(lo, config) {
        return lo;
    }
    if omega >= duty_to_speed(hi, config) {
        return hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if duty_to_speed(mid, config) < omega {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn spool_input_to_speed(spool_input: f64, config: &PlantConfig) -> f64 {
    duty_to_speed(spool_input_to_duty(spool_input, config), config)
}

pub fn speed_to_spool_input(omega: f64, config: &PlantConfig) -> f64 {
    duty_to_spool_input(speed_to_duty(omega, config), config)
}

/// Extruder input 0 ↦ feed_min, 100 ↦ feed_max, affine in between.
pub fn extruder_input_to_feed(extruder_input: f64, config: &PlantConfig) -> f64 {
    config.feed_min + (config.feed_max - config.feed_min) * extruder_input / 100.0
}

pub fn feed_to_extruder_input(feed: f64, config: &PlantConfig) -> f64 {
    100.0 * (feed - config.feed_min) / (config.feed_max - config.feed_min)
}

/// Mass-flow diameter (µm): preform area × feed speed equals fiber area ×
/// spool surface speed.
pub fn steady_state_diameter(feed: f64, omega: f64, radius: f64, config: &PlantConfig) -> Result<f64> {
    if !(feed > 0.0 && omega > 0.0 && radius > 0.0) {
        return Err(Error::Domain(format!(
            "diameter needs positive feed, speed and radius (f={feed}, ω={omega}, r={radius})"
        )));
    }
    Ok(config.preform_diameter * (feed / (radius * omega)).sqrt())
}

/// Fixed-length FIFO; a zero-length line passes values straight through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayLine {
    buf: VecDeque<f64>,
}

impl DelayLine {
    pub fn filled(len: usize, value: f64) -> Self {
        Self {
            buf: std::iter::repeat(value).take(len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push_pop(&mut self, value: f64) -> f64 {
        if self.buf.is_empty() {
            return value;
        }
        self.buf.push_back(value);
        self.buf.pop_front().expect("non-empty delay line")
    }
}

#[derive(Debug, Clone)]
pub struct PlantState {
    pub feed_delay_line: DelayLine,
    pub spool_delay_line: DelayLine,
    pub feed_lagged: f64,
    pub omega_lagged: f64,
    pub spool_radius_eff: f64,
    /// mm; Σ f·dt of commanded feed.
    pub cumulative_fed_length: f64,
    pub wound_fiber_length: f64,
    pub steps: u64,
    rng: ChaCha8Rng,
}

/// Everything one step reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub diameter_measured: f64,
    pub omega_measured: f64,
    pub diameter_true: f64,
    pub feed_cmd: f64,
    pub omega_cmd: f64,
    pub radius_eff: f64,
    pub cumulative_fed_length: f64,
    pub stalled: bool,
    /// The command after clamping, as actuated.
    pub command: ActuatorCommand,
}

impl PlantState {
    /// Fresh state at the configured initial command.
    pub fn reset(config: &PlantConfig, seed: u64) -> Self {
        Self::reset_with(config, seed, config.initial_command())
    }

    /// Fresh state with delay lines and lags settled at `initial`.
    pub fn reset_with(config: &PlantConfig, seed: u64, initial: ActuatorCommand) -> Self {
        let cmd = initial.clamped();
        let feed = extruder_input_to_feed(cmd.extruder_input, config);
        let omega = spool_input_to_speed(cmd.spool_input, config);
        Self {
            feed_delay_line: DelayLine::filled(config.feed_delay_steps(), feed),
            spool_delay_line: DelayLine::filled(config.spool_delay_steps(), omega),
            feed_lagged: feed,
            omega_lagged: omega,
            spool_radius_eff: config.spool_radius_0,
            cumulative_fed_length: 0.0,
            wound_fiber_length: 0.0,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn step(&mut self, cmd: ActuatorCommand, config: &PlantConfig) -> StepOutput {
        let cmd = cmd.clamped();
        let feed_cmd = extruder_input_to_feed(cmd.extruder_input, config);
        let omega_cmd = spool_input_to_speed(cmd.spool_input, config);

        let feed_delayed = self.feed_delay_line.push_pop(feed_cmd);
        let omega_delayed = self.spool_delay_line.push_pop(omega_cmd);
        self.feed_lagged += lag_gain(config.feed_lag_tau, config.dt) * (feed_delayed - self.feed_lagged);
        self.omega_lagged += lag_gain(config.spool_lag_tau, config.dt) * (omega_delayed - self.omega_lagged);

        let (diameter_true, stalled) =
            match steady_state_diameter(self.feed_lagged, self.omega_lagged, self.spool_radius_eff, config) {
                Ok(d) => (d.min(config.diameter_max), false),
                Err(_) => (config.diameter_max, true),
            };
        if stalled {
            log::warn!("spool stalled at step {}", self.steps);
        }

        let z: f64 = StandardNormal.sample(&mut self.rng);
        let diameter_measured = diameter_true * (config.noise_sigma_rel * z).exp();

        let wound = self.spool_radius_eff * self.omega_lagged.max(0.0) * config.dt;
        if config.radius_growth && !stalled {
            let d_mm = diameter_true / 1000.0;
            self.spool_radius_eff += d_mm * d_mm / (4.0 * config.fiber_wrap_width * self.spool_radius_eff) * wound;
        }
        self.wound_fiber_length += wound;
        self.cumulative_fed_length += feed_cmd * config.dt;
        self.steps += 1;

        StepOutput {
            diameter_measured,
            omega_measured: self.omega_lagged,
            diameter_true,
            feed_cmd,
            omega_cmd,
            radius_eff: self.spool_radius_eff,
            cumulative_fed_length: self.cumulative_fed_length,
            stalled,
            command: cmd,
        }
    }
}

fn lag_gain(tau: f64, dt: f64) -> f64 {
    if tau <= 0.0 {
        1.0
    } else {
        1.0 - (-dt / tau).exp()
    }
}

/// A plant bundled with its configuration.
#[derive(Debug, Clone)]
pub struct Plant {
    pub config: PlantConfig,
    pub state: PlantState,
}

impl Plant {
    pub fn new(config: PlantConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let state = PlantState::reset(&config, seed);
        Ok(Self { config, state })
    }

    pub fn with_initial(config: PlantConfig, seed: u64, initial: ActuatorCommand) -> Result<Self> {
        config.validate()?;
        let state = PlantState::reset_with(&config, seed, initial);
        Ok(Self { config, state })
    }

    pub fn reset(&mut self, seed: u64) {
        self.state = PlantState::reset(&self.config, seed);
    }

    pub fn step(&mut self, cmd: ActuatorCommand) -> StepOutput {
        self.state.step(cmd, &self.config)
    }
}

/// CSV step log: `t, a_sp, a_ex, f_cmd, omega_cmd, d_true, d_measured, r_eff, stall`.
pub struct StepLog<W: Write> {
    writer: csv::Writer<W>,
    dt: f64,
}

impl<W: Write> StepLog<W> {
    pub fn new(inner: W, dt: f64) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record([
            "t", "a_sp", "a_ex", "f_cmd", "omega_cmd", "d_true", "d_measured", "r_eff", "stall",
        ])?;
        Ok(Self { writer, dt })
    }

    pub fn record(&mut self, step: u64, out: &StepOutput) -> Result<()> {
        self.writer.write_record(&[
            (step as f64 * self.dt).to_string(),
            out.command.spool_input.to_string(),
            out.command.extruder_input.to_string(),
            out.feed_cmd.to_string(),
            out.omega_cmd.to_string(),
            out.diameter_true.to_string(),
            out.diameter_measured.to_string(),
            out.radius_eff.to_string(),
            u8::from(out.stalled).to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}
