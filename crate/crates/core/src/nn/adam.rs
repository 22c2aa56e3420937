use serde::{Deserialize, Serialize};

use super::linalg::Real;
use super::network::NetworkParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm clip applied to the gradient before the update.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One descent step `params ← params − lr·m̂/(√v̂ + ε)`. Pass the negated
    /// gradient for ascent.
    pub fn apply<T: Real>(&mut self, params: &mut NetworkParams<T>, grads: &[T]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Dimension {
                expected: params.len(),
                got: grads.len(),
                context: "adam gradient",
            });
        }
        if let Some((idx, g)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {idx} = {g}")));
        }
        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let norm = grads.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((w, g), m), v) in params
            .data_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g.f64() * scale;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w = T::of(w.f64() - c.lr * m_hat / (v_hat.sqrt() + c.eps));
        }
        Ok(())
    }
}

/// Functional form: returns updated parameters and optimizer state.
pub fn adam_step<T: Real>(
    params: &NetworkParams<T>,
    grads: &[T],
    adam: &AdamState,
) -> Result<(NetworkParams<T>, AdamState)> {
    let (mut p, mut a) = (params.clone(), adam.clone());
    a.apply(&mut p, grads)?;
    Ok((p, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetShape;

    fn scalar_net(w: f64) -> NetworkParams<f64> {
        // smallest net: 1 unit; we only look at the first entry
        let s = NetShape::new(1, vec![1], 1);
        let mut data = vec![0.0; s.param_count()];
        data[0] = w;
        NetworkParams::from_data(s, data).unwrap()
    }

    fn grad(g0: f64, len: usize) -> Vec<f64> {
        let mut g = vec![0.0; len];
        g[0] = g0;
        g
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let p = scalar_net(0.3);
        let adam = AdamState::new(AdamConfig::with_lr(0.1), p.len());
        let (q, a) = adam_step(&p, &vec![0.0; p.len()], &adam).unwrap();
        assert_eq!(q, p);
        assert_eq!(a.step, 1);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let p = scalar_net(0.0);
        let adam = AdamState::new(AdamConfig::with_lr(0.1), p.len());
        let (q, _) = adam_step(&p, &grad(1.0, p.len()), &adam).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −0.1/(1 + 1e-8)
        assert!((q.data()[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_hand_computed_steps() {
        let p = scalar_net(0.5);
        let adam = AdamState::new(AdamConfig::with_lr(0.01), p.len());
        let (q, a) = adam_step(&p, &grad(2.0, p.len()), &adam).unwrap();
        let (r, _) = adam_step(&q, &grad(-1.0, p.len()), &a).unwrap();
        // step 1: m=0.2, v=0.004; m̂=2, v̂=4 → w = 0.5 − 0.01·2/(2+1e-8)
        let w1 = 0.5 - 0.01 * 2.0 / (2.0 + 1e-8);
        // step 2: m = 0.18 − 0.1 = 0.08, v = 0.003996 + 0.001 = 0.004996
        let m_hat = 0.08 / (1.0 - 0.81);
        let v_hat: f64 = 0.004996 / (1.0 - 0.998001);
        let w2 = w1 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((q.data()[0] - w1).abs() < 1e-12);
        assert!((r.data()[0] - w2).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let p = scalar_net(0.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), p.len());
        let mut q = p.clone();
        let err = adam.apply(&mut q, &grad(f64::NAN, p.len())).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn clip_bounds_the_gradient_norm() {
        let p = scalar_net(0.0);
        let mut cfg = AdamConfig::with_lr(0.1);
        cfg.clip_norm = Some(0.5);
        let mut adam = AdamState::new(cfg, p.len());
        let mut q = p.clone();
        adam.apply(&mut q, &grad(10.0, p.len())).unwrap();
        assert!((adam.m[0] - 0.1 * 0.5).abs() < 1e-15);
    }
}
