use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::plant::{
    extruder_input_to_feed, feed_to_extruder_input, speed_to_spool_input, spool_input_to_speed, ActuatorCommand,
    Plant, PlantConfig,
};

/// Transformed QDMC inputs. Each maps its physical range onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputChannel {
    /// `√f`, normalized.
    Feed,
    /// `1/√ω`, normalized; 0 at the fastest spool speed.
    Spool,
}

impl InputChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Feed => "feed",
            Self::Spool => "spool",
        }
    }

    fn raw(self, physical: f64) -> f64 {
        match self {
            Self::Feed => physical.sqrt(),
            Self::Spool => 1.0 / physical.sqrt(),
        }
    }

    fn raw_range(self, plant: &PlantConfig) -> (f64, f64) {
        match self {
            Self::Feed => (plant.feed_min.sqrt(), plant.feed_max.sqrt()),
            Self::Spool => (1.0 / plant.omega_max.sqrt(), 1.0 / plant.omega_min().sqrt()),
        }
    }

    /// Physical value (mm/s or rad/s) to normalized input.
    pub fn normalize(self, physical: f64, plant: &PlantConfig) -> f64 {
        let (lo, hi) = self.raw_range(plant);
        (self.raw(physical) - lo) / (hi - lo)
    }

    pub fn denormalize(self, u: f64, plant: &PlantConfig) -> f64 {
        let (lo, hi) = self.raw_range(plant);
        let raw = lo + (hi - lo) * u;
        match self {
            Self::Feed => raw * raw,
            Self::Spool => 1.0 / (raw * raw),
        }
    }
}

/// Command for normalized inputs `[feed, spool]`.
pub fn command_for_inputs(u: [f64; 2], plant: &PlantConfig) -> ActuatorCommand {
    let feed = InputChannel::Feed.denormalize(u[0].clamp(0.0, 1.0), plant);
    let omega = InputChannel::Spool.denormalize(u[1].clamp(0.0, 1.0), plant);
    ActuatorCommand::new(speed_to_spool_input(omega, plant), feed_to_extruder_input(feed, plant)).clamped()
}

/// Normalized inputs `[feed, spool]` realized by a command.
pub fn inputs_for_command(cmd: ActuatorCommand, plant: &PlantConfig) -> [f64; 2] {
    [
        InputChannel::Feed.normalize(extruder_input_to_feed(cmd.extruder_input, plant), plant),
        InputChannel::Spool.normalize(spool_input_to_speed(cmd.spool_input, plant), plant),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentConfig {
    /// mm/s operating points for the feed channel.
    pub feed_points: Vec<f64>,
    /// rev/s operating points for the spool channel.
    pub spool_points_rev: Vec<f64>,
    /// mm/s held while the spool channel is stepped.
    pub nominal_feed: f64,
    /// rev/s held while the feed channel is stepped.
    pub nominal_spool_rev: f64,
    /// Step size in normalized input units.
    pub magnitude: f64,
    /// Steps recorded after the step.
    pub horizon: usize,
    /// Largest allowed `|s_T − s_{T−1}|` relative to `max |s|`.
    pub settle_tol: f64,
}

impl Default for IdentConfig {
    fn default() -> Self {
        Self {
            feed_points: vec![0.19, 0.37, 0.56],
            spool_points_rev: vec![0.6, 1.0, 1.4],
            nominal_feed: 0.37,
            nominal_spool_rev: 1.0,
            magnitude: 0.02,
            horizon: 160,
            settle_tol: 1e-3,
        }
    }
}

/// Unit-step response of the diameter (µm per normalized input unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelResponse {
    pub channel: InputChannel,
    /// `s_1 … s_T`: response `k` steps after the step was applied.
    pub coeffs: Vec<f64>,
}

impl ChannelResponse {
    /// `s_k`, held at `s_T` beyond the horizon; `s_0 = 0`.
    pub fn at(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k => *self.coeffs.get(k - 1).or(self.coeffs.last()).unwrap_or(&0.0),
        }
    }

    pub fn horizon(&self) -> usize {
        self.coeffs.len()
    }

    /// Response to `moves[i]` applied at step `i`, for steps `1..=len`.
    pub fn predict(&self, moves: &[f64], len: usize) -> Vec<f64> {
        (1..=len)
            .map(|j| {
                moves
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i < j)
                    .map(|(i, m)| self.at(j - i) * m)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponseModel {
    pub feed: ChannelResponse,
    pub spool: ChannelResponse,
    pub dt: f64,
}

impl StepResponseModel {
    pub fn channel(&self, c: InputChannel) -> &ChannelResponse {
        match c {
            InputChannel::Feed => &self.feed,
            InputChannel::Spool => &self.spool,
        }
    }

    /// Columns `k,feed,spool`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "feed", "spool"])?;
        let n = self.feed.horizon().max(self.spool.horizon());
        for k in 1..=n {
            w.write_record([k.to_string(), self.feed.at(k).to_string(), self.spool.at(k).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, dt: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let (mut feed, mut spool) = (Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse {
                        line: line + 2,
                        msg: "missing column".into(),
                    })?
                    .parse()
                    .map_err(|e| Error::Parse {
                        line: line + 2,
                        msg: format!("{e}"),
                    })
            };
            feed.push(get(1)?);
            spool.push(get(2)?);
        }
        Ok(Self {
            feed: ChannelResponse {
                channel: InputChannel::Feed,
                coeffs: feed,
            },
            spool: ChannelResponse {
                channel: InputChannel::Spool,
                coeffs: spool,
            },
            dt,
        })
    }
}

/// Diameter deviation (µm) per unit input after stepping `channel` by
/// `magnitude` from the steady operating point `base`, measured against an
/// unstepped twin run so that slow radius drift cancels. Points at the top
/// of the range are stepped downward.
fn step_deviation(
    plant: &PlantConfig,
    base: [f64; 2],
    channel: InputChannel,
    magnitude: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    let mut stepped = base;
    let delta = if base[channel as usize] + magnitude > 1.0 { -magnitude } else { magnitude };
    stepped[channel as usize] += delta;
    let base_cmd = command_for_inputs(base, plant);
    let step_cmd = command_for_inputs(stepped, plant);
    let mut a = Plant::with_initial(plant.clone(), 0, base_cmd)?;
    let mut b = Plant::with_initial(plant.clone(), 0, base_cmd)?;
    Ok((0..horizon)
        .map(|_| {
            let dev = b.step(step_cmd).diameter_true - a.step(base_cmd).diameter_true;
            if delta == 0.0 {
                0.0
            } else {
                dev / delta
            }
        })
        .collect())
}

/// Averaged unit-step response of one channel over its operating points,
/// from the noiseless simulator.
pub fn identify_step_response(plant: &PlantConfig, channel: InputChannel, cfg: &IdentConfig) -> Result<ChannelResponse> {
    let quiet = PlantConfig {
        noise_sigma_rel: 0.0,
        ..plant.clone()
    };
    let tau = std::f64::consts::TAU;
    let points: Vec<[f64; 2]> = match channel {
        InputChannel::Feed => cfg
            .feed_points
            .iter()
            .map(|&f| {
                [
                    InputChannel::Feed.normalize(f, &quiet),
                    InputChannel::Spool.normalize(tau * cfg.nominal_spool_rev, &quiet),
                ]
            })
            .collect(),
        InputChannel::Spool => cfg
            .spool_points_rev
            .iter()
            .map(|&w| {
                [
                    InputChannel::Feed.normalize(cfg.nominal_feed, &quiet),
                    InputChannel::Spool.normalize(tau * w, &quiet),
                ]
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::Config("identification needs at least one operating point".into()));
    }
    if !(0.0..0.5).contains(&cfg.magnitude) {
        return Err(Error::Config("step magnitude must lie in [0, 0.5)".into()));
    }
    for p in &points {
        if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
            return Err(Error::Domain(format!("operating point {p:?} outside the actuator range")));
        }
    }
    let runs = par::map(&points, |p| step_deviation(&quiet, *p, channel, cfg.magnitude, cfg.horizon));
    let mut coeffs = vec![0.0; cfg.horizon];
    for run in runs {
        for (c, d) in coeffs.iter_mut().zip(run?) {
            *c += d / points.len() as f64;
        }
    }
    let peak = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let n = coeffs.len();
    if n >= 2 && (coeffs[n - 1] - coeffs[n - 2]).abs() > cfg.settle_tol * peak.max(f64::MIN_POSITIVE) {
        return Err(Error::Unsettled {
            channel: channel.as_str().to_string(),
            horizon: cfg.horizon,
        });
    }
    Ok(ChannelResponse { channel, coeffs })
}

pub fn identify_model(plant: &PlantConfig, cfg: &IdentConfig) -> Result<StepResponseModel> {
    Ok(StepResponseModel {
        feed: identify_step_response(plant, InputChannel::Feed, cfg)?,
        spool: identify_step_response(plant, InputChannel::Spool, cfg)?,
        dt: plant.dt,
    })
}
