use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::ACTION_DIM;

/// Ornstein-Uhlenbeck exploration noise with geometrically decaying
/// volatility `σ_t = σ·β^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuNoiseState {
    pub value: [f64; ACTION_DIM],
    pub sigma: f64,
    /// Mean-reversion speed.
    pub theta: f64,
    pub mean: f64,
    pub decay: f64,
    pub dt: f64,
    pub step: u64,
}

impl OuNoiseState {
    pub fn new(sigma: f64, theta: f64, decay: f64, dt: f64, mean: f64) -> Self {
        Self {
            value: [mean; ACTION_DIM],
            sigma,
            theta,
            mean,
            decay,
            dt,
            step: 0,
        }
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma * self.decay.powf(self.step as f64)
    }

    /// One OU step driven by the given standard normal draws.
    pub fn advance(&mut self, z: [f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        let s = self.sigma_t() * self.dt.sqrt();
        for (x, z) in self.value.iter_mut().zip(z) {
            *x += self.theta * (self.mean - *x) * self.dt + s * z;
        }
        self.step += 1;
        self.value
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [f64; ACTION_DIM] {
        let mut z = [0.0; ACTION_DIM];
        for v in &mut z {
            *v = StandardNormal.sample(rng);
        }
        self.advance(z)
    }

    pub fn reset_value(&mut self) {
        self.value = [self.mean; ACTION_DIM];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_decays_per_table() {
        let mut n = OuNoiseState::new(10.0, 0.1, 0.999925, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut prev = n.sigma_t();
        for _ in 0..1000 {
            n.sample(&mut rng);
            assert!(n.sigma_t() <= prev);
            prev = n.sigma_t();
        }
        assert!((n.sigma_t() - 10.0 * 0.999925_f64.powi(1000)).abs() < 1e-12);
    }

    #[test]
    fn zero_draws_decay_geometrically() {
        let mut n = OuNoiseState::new(10.0, 0.1, 0.999925, 1.0, 0.0);
        n.value = [4.0, -2.0];
        for k in 1..=20 {
            let v = n.advance([0.0, 0.0]);
            let f = 0.9_f64.powi(k);
            assert!((v[0] - 4.0 * f).abs() < 1e-12);
            assert!((v[1] + 2.0 * f).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_spread_matches_ou_theory() {
        // Var = σ²dt / (1 − (1 − θdt)²) for the discrete recursion.
        let mut n = OuNoiseState::new(1.0, 0.1, 1.0, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut acc = 0.0;
        let count = 200_000;
        for _ in 0..1000 {
            n.sample(&mut rng);
        }
        for _ in 0..count {
            acc += n.sample(&mut rng)[0].powi(2);
        }
        let var = acc / count as f64;
        let expect = 1.0 / (1.0 - 0.81);
        assert!((var / expect - 1.0).abs() < 0.08, "{var} vs {expect}");
    }
}
