use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{duty_to_speed, duty_to_spool_input, PlantConfig};

/// Least-squares polynomial fit of the duty→speed curve and its inverse,
/// which turns a speed fraction in [0, 100] into a duty that produces that
/// fraction of the operable speed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedMap {
    /// Polynomial in normalized duty `(duty − duty_lo) / (duty_hi − duty_lo)`.
    pub coeffs: Vec<f64>,
    pub duty_lo: f64,
    pub duty_hi: f64,
}

impl SpeedMap {
    /// Fits `degree` to `(duty %, speed)` samples spanning `[duty_lo, duty_hi]`.
    pub fn fit(samples: &[(f64, f64)], degree: usize, duty_lo: f64, duty_hi: f64) -> Result<Self> {
        if samples.len() <= degree {
            return Err(Error::Domain(format!(
                "{} samples cannot determine a degree {degree} fit",
                samples.len()
            )));
        }
        if !(duty_lo < duty_hi) {
            return Err(Error::Domain("empty duty range".into()));
        }
        let norm = |d: f64| (d - duty_lo) / (duty_hi - duty_lo);
        let a = DMatrix::from_fn(samples.len(), degree + 1, |i, j| norm(samples[i].0).powi(j as i32));
        let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
        let coeffs = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?;
        let map = Self {
            coeffs: coeffs.iter().copied().collect(),
            duty_lo,
            duty_hi,
        };
        let grid: Vec<f64> = (0..=200).map(|k| map.speed(duty_lo + (duty_hi - duty_lo) * k as f64 / 200.0)).collect();
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("fitted speed curve is not increasing".into()));
        }
        Ok(map)
    }

    /// Fit against steady speeds read off the simulated motor.
    pub fn from_plant(config: &PlantConfig, points: usize, degree: usize) -> Result<Self> {
        let lo = config.duty_min_pct;
        let samples: Vec<(f64, f64)> = (0..points)
            .map(|k| {
                let duty = lo + (100.0 - lo) * k as f64 / (points - 1) as f64;
                (duty, duty_to_speed(duty, config))
            })
            .collect();
        Self::fit(&samples, degree, lo, 100.0)
    }

    pub fn speed(&self, duty: f64) -> f64 {
        let x = (duty - self.duty_lo) / (self.duty_hi - self.duty_lo);
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Duty whose fitted speed is `omega`, clamped to the duty range.
    pub fn duty_for_speed(&self, omega: f64) -> f64 {
        let (mut lo, mut hi) = (self.duty_lo, self.duty_hi);
        if omega <= self.speed(lo) {
            return lo;
        }
        if omega >= self.speed(hi) {
            return hi;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.speed(mid) < omega {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Duty for a speed fraction in [0, 100] of the fitted speed range.
    pub fn duty_for_fraction(&self, fraction: f64) -> f64 {
        let f = if fraction.is_nan() { 0.0 } else { fraction.clamp(0.0, 100.0) };
        let (w_lo, w_hi) = (self.speed(self.duty_lo), self.speed(self.duty_hi));
        self.duty_for_speed(w_lo + (w_hi - w_lo) * f / 100.0)
    }

    /// Spool input (raw duty scale) that realizes a speed fraction.
    pub fn spool_input_for_fraction(&self, fraction: f64, config: &PlantConfig) -> f64 {
        duty_to_spool_input(self.duty_for_fraction(fraction), config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::spool_input_to_speed;

    #[test]
    fn fit_reproduces_the_curve() {
        let cfg = PlantConfig::default();
        let m = SpeedMap::from_plant(&cfg, 25, 3).unwrap();
        for k in 0..=50 {
            let duty = cfg.duty_min_pct + (100.0 - cfg.duty_min_pct) * k as f64 / 50.0;
            assert!((m.speed(duty) - duty_to_speed(duty, &cfg)).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_after_forward_is_identity() {
        let cfg = PlantConfig::default();
        let m = SpeedMap::from_plant(&cfg, 25, 3).unwrap();
        for k in 0..=40 {
            let duty = cfg.duty_min_pct + (100.0 - cfg.duty_min_pct) * k as f64 / 40.0;
            assert!((m.duty_for_speed(m.speed(duty)) - duty).abs() < 1e-9);
        }
    }

    #[test]
    fn fraction_is_linear_in_speed() {
        let cfg = PlantConfig::default();
        let m = SpeedMap::from_plant(&cfg, 25, 3).unwrap();
        let w0 = spool_input_to_speed(m.spool_input_for_fraction(0.0, &cfg), &cfg);
        let w1 = spool_input_to_speed(m.spool_input_for_fraction(100.0, &cfg), &cfg);
        for f in [10.0, 25.0, 50.0, 75.0, 90.0] {
            let w = spool_input_to_speed(m.spool_input_for_fraction(f, &cfg), &cfg);
            assert!((w - (w0 + (w1 - w0) * f / 100.0)).abs() < 1e-7);
        }
        assert_eq!(m.duty_for_fraction(150.0), m.duty_for_fraction(100.0));
        assert_eq!(m.duty_for_fraction(-3.0), m.duty_for_fraction(0.0));
    }

    #[test]
    fn rejects_decreasing_fit() {
        let samples: Vec<(f64, f64)> = (0..10).map(|k| (10.0 * k as f64, 10.0 - k as f64)).collect();
        assert!(SpeedMap::fit(&samples, 1, 0.0, 90.0).is_err());
    }
}
