//! Reference diameter trajectories for training and evaluation.

use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offsets (in steps) of the reference values carried by an observation.
pub const FUTURE_OFFSETS: [usize; 6] = [0, 10, 20, 30, 40, 50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Steady,
    RandomStep,
    SineSweep,
    RandomSpline,
    ThreeStep,
    Custom,
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Steady => "steady",
            Self::RandomStep => "random_step",
            Self::SineSweep => "sine_sweep",
            Self::RandomSpline => "random_spline",
            Self::ThreeStep => "three_step",
            Self::Custom => "custom",
        }
    }
}

impl FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "steady" => Self::Steady,
            "random_step" => Self::RandomStep,
            "sine_sweep" => Self::SineSweep,
            "random_spline" => Self::RandomSpline,
            "three_step" => Self::ThreeStep,
            "custom" => Self::Custom,
            other => return Err(Error::Config(format!("unknown trajectory kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    /// µm, one value per step.
    pub diameters: Vec<f64>,
    pub kind: TrajectoryKind,
    pub seed: u64,
    pub dt: f64,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.diameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diameters.is_empty()
    }

    /// Reference at `t`, holding the last value past the end.
    pub fn at(&self, t: usize) -> f64 {
        let last = self.diameters.len() - 1;
        self.diameters[t.min(last)]
    }

    /// Current and future references at [`FUTURE_OFFSETS`].
    pub fn future_refs(&self, t: usize) -> [f64; 6] {
        FUTURE_OFFSETS.map(|k| self.at(t + k))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# kind={},seed={},dt={}", self.kind.as_str(), self.seed, self.dt)?;
        writeln!(out, "d_ref_um")?;
        for d in &self.diameters {
            writeln!(out, "{d}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, meta) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty trajectory file".into(),
        })?;
        let meta = meta?;
        let meta = meta.strip_prefix('#').ok_or(Error::Parse {
            line: 1,
            msg: "expected `# kind=..,seed=..,dt=..` header".into(),
        })?;
        let (mut kind, mut seed, mut dt) = (TrajectoryKind::Custom, 0_u64, 0.25_f64);
        for field in meta.split(',') {
            let Some((k, v)) = field.trim().split_once('=') else { continue };
            let bad = |m: String| Error::Parse { line: 1, msg: m };
            match k {
                "kind" => kind = v.parse()?,
                "seed" => seed = v.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "dt" => dt = v.parse().map_err(|e| bad(format!("dt: {e}")))?,
                _ => {}
            }
        }
        let mut diameters = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "d_ref_um" {
                continue;
            }
            diameters.push(line.parse().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("{e}"),
            })?);
        }
        if diameters.is_empty() {
            return Err(Error::Parse {
                line: 2,
                msg: "trajectory has no samples".into(),
            });
        }
        Ok(Self {
            diameters,
            kind,
            seed,
            dt,
        })
    }
}

pub fn steady(setpoint: f64, length: usize, dt: f64) -> Result<ReferenceTrajectory> {
    if length == 0 {
        return Err(Error::Config("trajectory length must be at least 1".into()));
    }
    Ok(ReferenceTrajectory {
        diameters: vec![setpoint; length],
        kind: TrajectoryKind::Steady,
        seed: 0,
        dt,
    })
}

/// Piecewise-constant levels drawn i.i.d. uniform on [lo, hi), each held for
/// `interval` steps.
pub fn random_step(
    interval: usize,
    lo: f64,
    hi: f64,
    length: usize,
    seed: u64,
    dt: f64,
) -> Result<ReferenceTrajectory> {
    if !(lo < hi) || interval == 0 || length == 0 {
        return Err(Error::Config(
            "random_step needs lo < hi, interval ≥ 1 and length ≥ 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diameters = Vec::with_capacity(length);
    while diameters.len() < length {
        let level = rng.random_range(lo..hi);
        let n = interval.min(length - diameters.len());
        diameters.extend(std::iter::repeat(level).take(n));
    }
    Ok(ReferenceTrajectory {
        diameters,
        kind: TrajectoryKind::RandomStep,
        seed,
        dt,
    })
}

/// Named step sequence, each level held for `segment` steps.
pub fn three_step(levels: &[f64], segment: usize, dt: f64) -> Result<ReferenceTrajectory> {
    if levels.is_empty() || segment == 0 {
        return Err(Error::Config("three_step needs levels and a segment length".into()));
    }
    Ok(ReferenceTrajectory {
        diameters: levels
            .iter()
            .flat_map(|&l| std::iter::repeat(l).take(segment))
            .collect(),
        kind: TrajectoryKind::ThreeStep,
        seed: 0,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineSweep {
    /// Hz
    pub f0: f64,
    pub f1: f64,
    /// Hz/s
    pub rate: f64,
    pub mean: f64,
    pub amplitude: f64,
}

impl Default for SineSweep {
    fn default() -> Self {
        Self {
            f0: 0.01,
            f1: 0.06,
            rate: 1e-4,
            mean: 450.0,
            amplitude: 100.0,
        }
    }
}

impl SineSweep {
    pub fn duration(&self) -> f64 {
        (self.f1 - self.f0) / self.rate
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f0 + self.rate * t
    }

    /// Step at which the instantaneous frequency reaches `freq`.
    pub fn step_at_frequency(&self, freq: f64, dt: f64) -> usize {
        ((freq - self.f0) / self.rate / dt).round().max(0.0) as usize
    }
}

/// Linear chirp that ends once the instantaneous frequency reaches `f1`.
pub fn sine_sweep(sweep: SineSweep, dt: f64) -> Result<ReferenceTrajectory> {
    if !(sweep.f0 < sweep.f1) || !(sweep.rate > 0.0) || !(dt > 0.0) {
        return Err(Error::Config("sine_sweep needs f0 < f1, rate > 0 and dt > 0".into()));
    }
    let steps = (sweep.duration() / dt).round() as usize;
    let diameters = (0..steps)
        .map(|k| {
            let t = k as f64 * dt;
            let phase = 2.0 * std::f64::consts::PI * (sweep.f0 * t + 0.5 * sweep.rate * t * t);
            sweep.mean + sweep.amplitude * phase.sin()
        })
        .collect();
    Ok(ReferenceTrajectory {
        diameters,
        kind: TrajectoryKind::SineSweep,
        seed: 0,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub point_lo: f64,
    pub point_hi: f64,
    pub gap_min: usize,
    pub gap_max: usize,
}

impl Default for SplineSpec {
    fn default() -> Self {
        Self {
            point_lo: 350.0,
            point_hi: 550.0,
            gap_min: 20,
            gap_max: 80,
        }
    }
}

/// Cubic B-spline with clamped ends over random control points placed at
/// random gaps. The curve approximates rather than interpolates the points.
pub fn random_spline(spec: SplineSpec, length: usize, seed: u64, dt: f64) -> Result<ReferenceTrajectory> {
    if !(spec.point_lo <= spec.point_hi) || spec.gap_min == 0 || spec.gap_min > spec.gap_max || length == 0 {
        return Err(Error::Config("random_spline needs lo ≤ hi and 1 ≤ gap_min ≤ gap_max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0];
    let mut values = vec![draw_level(&mut rng, spec)];
    while (*times.last().unwrap() as usize) < length - 1 || times.len() < 4 {
        let gap = rng.random_range(spec.gap_min..=spec.gap_max) as f64;
        times.push(times.last().unwrap() + gap);
        values.push(draw_level(&mut rng, spec));
    }
    let spline = ClampedCubic::new(&times, values)?;
    let diameters = (0..length).map(|t| spline.eval(t as f64)).collect();
    Ok(ReferenceTrajectory {
        diameters,
        kind: TrajectoryKind::RandomSpline,
        seed,
        dt,
    })
}

fn draw_level(rng: &mut ChaCha8Rng, spec: SplineSpec) -> f64 {
    if spec.point_lo == spec.point_hi {
        spec.point_lo
    } else {
        rng.random_range(spec.point_lo..spec.point_hi)
    }
}

/// Clamped cubic B-spline with knots from control-point times by averaging.
#[derive(Debug, Clone)]
pub struct ClampedCubic {
    knots: Vec<f64>,
    control: Vec<f64>,
}

impl ClampedCubic {
    const DEGREE: usize = 3;

    pub fn new(times: &[f64], control: Vec<f64>) -> Result<Self> {
        let n = control.len();
        if n < Self::DEGREE + 1 || times.len() != n {
            return Err(Error::Config("cubic B-spline needs at least 4 control points".into()));
        }
        let p = Self::DEGREE;
        let mut knots = vec![times[0]; p + 1];
        for j in 1..n - p {
            knots.push(times[j..j + p].iter().sum::<f64>() / p as f64);
        }
        knots.extend(std::iter::repeat(times[n - 1]).take(p + 1));
        Ok(Self { knots, control })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// De Boor evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let p = Self::DEGREE;
        let n = self.control.len();
        let (lo, hi) = self.domain();
        let x = x.clamp(lo, hi);
        // Span k with knots[k] ≤ x < knots[k+1], restricted to [p, n-1].
        let mut k = p;
        while k < n - 1 && x >= self.knots[k + 1] {
            k += 1;
        }
        let mut d: Vec<f64> = (0..=p).map(|j| self.control[j + k - p]).collect();
        for r in 1..=p {
            for j in (r..=p).rev() {
                let i = j + k - p;
                let denom = self.knots[i + p + 1 - r] - self.knots[i];
                let alpha = if denom == 0.0 { 0.0 } else { (x - self.knots[i]) / denom };
                d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
            }
        }
        d[p]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_examples() {
        let t = steady(550.0, 3, 0.25).unwrap();
        assert_eq!(t.diameters, vec![550.0; 3]);
        assert_eq!(steady(420.0, 1, 0.25).unwrap().len(), 1);
        assert_eq!(t.future_refs(1), [550.0; 6]);
        assert!(steady(1.0, 0, 0.25).is_err());
    }

    #[test]
    fn future_refs_hold_the_end() {
        let t = random_step(120, 300.0, 600.0, 500, 4, 0.25).unwrap();
        let last = *t.diameters.last().unwrap();
        assert_eq!(t.future_refs(499), [last; 6]);
        for s in [0, 17, 250, 470] {
            assert_eq!(t.future_refs(s)[0], t.diameters[s]);
        }
    }

    #[test]
    fn future_refs_straddle_a_step() {
        let t = random_step(100, 300.0, 600.0, 400, 11, 0.25).unwrap();
        let refs = t.future_refs(75);
        let (old, new) = (t.diameters[99], t.diameters[100]);
        assert_ne!(old, new);
        assert_eq!(&refs[..3], &[old; 3]);
        assert_eq!(&refs[3..], &[new; 3]);
    }

    #[test]
    fn random_step_is_piecewise_and_seeded() {
        let a = random_step(200, 300.0, 600.0, 1000, 5, 0.25).unwrap();
        let b = random_step(200, 300.0, 600.0, 1000, 5, 0.25).unwrap();
        assert_eq!(a, b);
        for k in 0..1000 {
            if k % 200 != 0 {
                assert_eq!(a.diameters[k], a.diameters[k - 1]);
            }
            assert!((300.0..600.0).contains(&a.diameters[k]));
        }
        assert!(random_step(10, 600.0, 300.0, 10, 0, 0.25).is_err());
    }

    #[test]
    fn sine_sweep_examples() {
        let sweep = SineSweep::default();
        let t = sine_sweep(sweep, 0.25).unwrap();
        assert_eq!(t.len(), 2000);
        assert!((sweep.duration() - 500.0).abs() < 1e-9);
        assert_eq!(t.diameters[0], 450.0);
        assert!((sweep.instantaneous_frequency(250.0) - 0.035).abs() < 1e-15);
        assert_eq!(sweep.step_at_frequency(0.035, 0.25), 1000);
        assert!(t.diameters.iter().all(|d| (350.0..=550.0).contains(d)));
    }

    #[test]
    fn spline_of_constant_points_is_constant() {
        let spec = SplineSpec {
            point_lo: 420.0,
            point_hi: 420.0,
            ..SplineSpec::default()
        };
        let t = random_spline(spec, 900, 3, 0.25).unwrap();
        assert!(t.diameters.iter().all(|&d| (d - 420.0).abs() < 1e-9));
    }

    #[test]
    fn spline_stays_in_control_hull() {
        for seed in 0..10 {
            let t = random_spline(SplineSpec::default(), 2000, seed, 0.25).unwrap();
            assert!(t.diameters.iter().all(|d| (350.0..=550.0).contains(d)));
        }
    }

    #[test]
    fn clamped_spline_hits_end_points() {
        let s = ClampedCubic::new(&[0.0, 10.0, 20.0, 30.0, 40.0], vec![1.0, 5.0, -2.0, 4.0, 3.0]).unwrap();
        assert!((s.eval(0.0) - 1.0).abs() < 1e-12);
        assert!((s.eval(40.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let t = random_spline(SplineSpec::default(), 300, 9, 0.25).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ReferenceTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }
}
