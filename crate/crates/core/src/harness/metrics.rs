//! Pure functions of recorded series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: b.len(),
            got: a.len(),
            context: "metric series",
        });
    }
    Ok(())
}

/// Root mean squared difference; 0 for empty series.
pub fn rmse(measured: &[f64], reference: &[f64]) -> Result<f64> {
    same_len(measured, reference)?;
    if measured.is_empty() {
        return Ok(0.0);
    }
    let se: f64 = measured.iter().zip(reference).map(|(m, r)| (m - r) * (m - r)).sum();
    Ok((se / measured.len() as f64).sqrt())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Shift in seconds that best aligns `measured` with `reference`; positive
/// when the measurement trails. Each candidate shift is scored by the
/// Pearson correlation over the overlapping samples; ties go to the
/// smallest |shift|.
pub fn cross_correlation_lag(measured: &[f64], reference: &[f64], max_lag: usize, dt: f64) -> Result<f64> {
    same_len(measured, reference)?;
    if measured.len() <= 2 * max_lag {
        return Err(Error::Domain(format!(
            "series of {} samples is too short for a ±{max_lag} step lag search",
            measured.len()
        )));
    }
    let n = measured.len();
    let mut best = (f64::NEG_INFINITY, 0i64);
    let mut candidates: Vec<i64> = vec![0];
    for k in 1..=max_lag as i64 {
        candidates.push(k);
        candidates.push(-k);
    }
    for lag in candidates {
        let score = if lag >= 0 {
            let l = lag as usize;
            pearson(&measured[l..], &reference[..n - l])
        } else {
            let l = (-lag) as usize;
            pearson(&measured[..n - l], &reference[l..])
        };
        if score > best.0 {
            best = (score, lag);
        }
    }
    Ok(best.1 as f64 * dt)
}

/// Trailing moving average: element `i` averages `series[i..i+window]`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > series.len() {
        return Err(Error::Domain(format!(
            "moving window {window} does not fit {} samples",
            series.len()
        )));
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..series.len() {
        sum += series[i] - series[i - window];
        out.push(sum / window as f64);
    }
    Ok(out)
}

/// Reward learning curve with a trailing window.
pub fn learning_curve(rewards: &[f64], window: usize) -> Result<Vec<f64>> {
    moving_average(rewards, window)
}

/// RMSE over each trailing window of `window` samples; empty when the run
/// is shorter than the window.
pub fn local_rmse(measured: &[f64], reference: &[f64], window: usize) -> Result<Vec<f64>> {
    same_len(measured, reference)?;
    if window == 0 {
        return Err(Error::Domain("local RMSE window must be positive".into()));
    }
    if measured.len() < window {
        return Ok(Vec::new());
    }
    let sq: Vec<f64> = measured.iter().zip(reference).map(|(m, r)| (m - r) * (m - r)).collect();
    Ok(moving_average(&sq, window)?.into_iter().map(f64::sqrt).collect())
}

/// Trailing mean and 1.96·std (population) over `window` samples.
pub fn moving_band(series: &[f64], window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mean = moving_average(series, window)?;
    let band = mean
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let var = series[i..i + window].iter().map(|v| (v - m) * (v - m)).sum::<f64>() / window as f64;
            1.96 * var.sqrt()
        })
        .collect();
    Ok((mean, band))
}

/// Mean absolute change between consecutive samples.
pub fn mean_abs_change(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return 0.0;
    }
    series.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (series.len() - 1) as f64
}

/// First index at which `curve` reaches `threshold`.
pub fn first_crossing(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&v| v >= threshold)
}

pub const LAG_SEARCH_STEPS: usize = 80;
pub const LOCAL_RMSE_WINDOW: usize = 500;
pub const BAND_WINDOW: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// µm
    pub rmse: f64,
    /// s, positive when the measurement trails; absent for short runs.
    pub lag: Option<f64>,
    pub local_rmse: Vec<f64>,
    pub moving_mean: Vec<f64>,
    pub moving_band: Vec<f64>,
}

impl MetricsReport {
    pub fn compute(measured: &[f64], reference: &[f64], dt: f64) -> Result<Self> {
        let lag = if measured.len() > 2 * LAG_SEARCH_STEPS {
            Some(cross_correlation_lag(measured, reference, LAG_SEARCH_STEPS, dt)?)
        } else {
            None
        };
        let (moving_mean, moving_band) = if measured.len() >= BAND_WINDOW {
            moving_band(measured, BAND_WINDOW)?
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            rmse: rmse(measured, reference)?,
            lag,
            local_rmse: local_rmse(measured, reference, LOCAL_RMSE_WINDOW)?,
            moving_mean,
            moving_band,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[10.0, 20.0, 30.0], &[0.0, 10.0, 20.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5_f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn square_wave(n: usize) -> Vec<f64> {
        (0..n).map(|i| if (i / 37) % 2 == 0 { 400.0 } else { 500.0 } + (i % 7) as f64).collect()
    }

    #[test]
    fn lag_sign_convention() {
        let r = square_wave(1000);
        assert_eq!(cross_correlation_lag(&r, &r, 80, 0.25).unwrap(), 0.0);
        let mut late = vec![r[0]; 14];
        late.extend_from_slice(&r[..1000 - 14]);
        assert_eq!(cross_correlation_lag(&late, &r, 80, 0.25).unwrap(), 3.5);
        let mut early = r[2..].to_vec();
        early.extend_from_slice(&[r[999]; 2]);
        assert_eq!(cross_correlation_lag(&early, &r, 80, 0.25).unwrap(), -0.5);
        assert!(cross_correlation_lag(&r[..100], &r[..100], 80, 0.25).is_err());
    }

    #[test]
    fn lag_ties_prefer_zero() {
        let c = vec![1.0; 200];
        assert_eq!(cross_correlation_lag(&c, &c, 80, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn learning_curve_examples() {
        assert!(learning_curve(&[1.0; 50], 10).unwrap().iter().all(|&v| v == 1.0));
        let mut s = vec![0.0; 20];
        s.extend(vec![1.0; 20]);
        let c = learning_curve(&s, 10).unwrap();
        // trailing windows end at 9..=39; the ramp spans windows ending 20..=29
        assert_eq!(c[10], 0.0);
        for (k, v) in c[11..=20].iter().enumerate() {
            assert!((v - (k + 1) as f64 / 10.0).abs() < 1e-12);
        }
        assert!(learning_curve(&[1.0; 5], 10).is_err());
    }

    #[test]
    fn local_rmse_length() {
        let a = vec![1.0; 700];
        let b = vec![0.0; 700];
        let l = local_rmse(&a, &b, 500).unwrap();
        assert_eq!(l.len(), 201);
        assert!(l.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(local_rmse(&a[..300], &b[..300], 500).unwrap().is_empty());
    }

    #[test]
    fn band_of_alternating_series() {
        let s: Vec<f64> = (0..80).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (m, b) = moving_band(&s, 40).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
        assert!(b.iter().all(|v| (v - 1.96).abs() < 1e-12));
    }

    #[test]
    fn action_change_and_crossing() {
        assert_eq!(mean_abs_change(&[0.0, 1.0, -1.0]), 1.5);
        assert_eq!(first_crossing(&[0.0, 0.2, 0.5, 0.1], 0.4), Some(2));
        assert_eq!(first_crossing(&[0.0], 0.4), None);
    }
}
