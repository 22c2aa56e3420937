use rand::Rng;

use super::config::{AgentConfig, InvertMode};
use super::encode::WindowEncoder;
use super::memory::{HistoryMemory, Transition};
use super::types::{Action, ACTION_DIM};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, NetShape, NetworkParams, OutputActivation, Real};
use crate::plant::PlantConfig;
use crate::seed::derive_seed;

/// Actor, critic, their targets and optimizers.
#[derive(Debug, Clone)]
pub struct Learner<T: Real> {
    pub actor: NetworkParams<T>,
    pub critic: NetworkParams<T>,
    pub target_actor: NetworkParams<T>,
    pub target_critic: NetworkParams<T>,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub encoder: WindowEncoder,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub invert_mode: InvertMode,
}

/// Diagnostics of one train iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    /// ‖φ_new − φ_old‖ of the actor step.
    pub actor_step: f64,
    pub mean_target: f64,
}

pub fn actor_shape(cfg: &AgentConfig, encoder: &WindowEncoder) -> NetShape {
    NetShape {
        input_dim: encoder.step_dim(),
        hidden: cfg.actor_hidden.clone(),
        output_dim: ACTION_DIM,
        output_activation: OutputActivation::Identity,
    }
}

pub fn critic_shape(cfg: &AgentConfig, encoder: &WindowEncoder) -> NetShape {
    NetShape {
        input_dim: encoder.step_dim(),
        hidden: cfg.critic_hidden.clone(),
        output_dim: 1,
        output_activation: OutputActivation::Identity,
    }
}

fn adam_config(lr: f64, clip: f64) -> AdamConfig {
    AdamConfig {
        clip_norm: (clip > 0.0).then_some(clip),
        ..AdamConfig::with_lr(lr)
    }
}

impl<T: Real> Learner<T> {
    pub fn new(cfg: &AgentConfig, plant: &PlantConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = WindowEncoder::new(cfg, plant);
        let actor = NetworkParams::glorot(actor_shape(cfg, &encoder), derive_seed(cfg.seed, 1), cfg.forget_bias)?;
        let critic = NetworkParams::glorot(critic_shape(cfg, &encoder), derive_seed(cfg.seed, 2), cfg.forget_bias)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_adam: AdamState::new(adam_config(cfg.actor_lr, cfg.grad_clip), actor.len()),
            critic_adam: AdamState::new(adam_config(cfg.critic_lr, cfg.grad_clip), critic.len()),
            actor,
            critic,
            encoder,
            gamma: cfg.gamma,
            tau: cfg.tau,
            batch_size: cfg.batch_size,
            invert_mode: cfg.invert_mode,
        })
    }

    /// One full update on the given slices: targets, critic, actor, then
    /// both soft target updates.
    pub fn update(&mut self, slices: &[Vec<Transition>]) -> Result<TrainStats> {
        let targets = compute_targets(&self.target_actor, &self.target_critic, &self.encoder, slices, self.gamma)?;
        let critic_loss = critic_update(&mut self.critic, &mut self.critic_adam, &self.encoder, slices, &targets)?;
        let actor_step = actor_update(
            &mut self.actor,
            &self.critic,
            &mut self.actor_adam,
            &self.encoder,
            slices,
            self.invert_mode,
        )?;
        self.target_critic.soft_update_from(&self.critic, self.tau)?;
        self.target_actor.soft_update_from(&self.actor, self.tau)?;
        Ok(TrainStats {
            critic_loss,
            actor_step,
            mean_target: targets.iter().sum::<f64>() / targets.len() as f64,
        })
    }
}

fn newest(slices: &[Vec<Transition>]) -> Result<usize> {
    let len = slices.first().map(Vec::len).unwrap_or(0);
    if len < 3 || slices.iter().any(|s| s.len() != len) {
        return Err(Error::Dimension {
            expected: len.max(3),
            got: slices.iter().map(Vec::len).min().unwrap_or(0),
            context: "memory slices",
        });
    }
    Ok(len - 1)
}

fn check_slices(encoder: &WindowEncoder, slices: &[Vec<Transition>]) -> Result<usize> {
    let last = newest(slices)?;
    if last != encoder.window + 1 {
        return Err(Error::Dimension {
            expected: encoder.window + 2,
            got: last + 1,
            context: "slice length",
        });
    }
    Ok(last)
}

/// `y_i = r_i + γ·Q′(h_i, π′(h_i))` for slices whose newest entry is `i`.
pub fn compute_targets<T: Real>(
    target_actor: &NetworkParams<T>,
    target_critic: &NetworkParams<T>,
    encoder: &WindowEncoder,
    slices: &[Vec<Transition>],
    gamma: f64,
) -> Result<Vec<f64>> {
    let last = check_slices(encoder, slices)?;
    let y = target_actor.predict(&encoder.actor_batch::<T>(slices, last))?;
    let next: Vec<Action> = y.chunks_exact(ACTION_DIM).map(|o| encoder.action_from_output(o)).collect();
    let q = target_critic.predict(&encoder.critic_batch::<T>(slices, last, Some(&next)))?;
    Ok(slices
        .iter()
        .zip(&q)
        .map(|(s, &q)| s[last].reward + gamma * encoder.q_from_output(q))
        .collect())
}

/// One Adam step on `J = mean (y_i − Q(h_{i−1}, a_{i−1}))²`. Returns J as
/// evaluated before the step.
pub fn critic_update<T: Real>(
    critic: &mut NetworkParams<T>,
    adam: &mut AdamState,
    encoder: &WindowEncoder,
    slices: &[Vec<Transition>],
    targets: &[f64],
) -> Result<f64> {
    let last = check_slices(encoder, slices)?;
    if targets.len() != slices.len() {
        return Err(Error::Dimension {
            expected: slices.len(),
            got: targets.len(),
            context: "critic targets",
        });
    }
    let (out, cache) = critic.forward(&encoder.critic_batch::<T>(slices, last - 1, None))?;
    let n = slices.len() as f64;
    let mut loss = 0.0;
    let mut out_grad = Vec::with_capacity(out.len());
    for (&y, &q) in targets.iter().zip(&out) {
        let err = y - encoder.q_from_output(q);
        loss += err * err / n;
        out_grad.push(T::of(-2.0 * err * encoder.q_scale / n));
    }
    if !loss.is_finite() {
        log::warn!("critic loss is {loss}; update skipped");
        return Err(Error::NonFinite(format!("critic loss {loss}")));
    }
    let grads = critic.backward(&cache, &out_grad, false)?;
    adam.apply(critic, &grads.params)?;
    Ok(loss)
}

/// Redirects an ascent gradient `grad = ∂Q/∂a` so that out-of-range actions
/// are pulled back toward `[lo, hi]`.
pub fn invert_gradient(grad: f64, action: f64, lo: f64, hi: f64, mode: InvertMode) -> f64 {
    let width = hi - lo;
    match mode {
        InvertMode::Literal => {
            if grad > 0.0 && action > hi {
                grad * (hi - action) / width
            } else if grad < 0.0 && action < lo {
                grad * (action - lo) / width
            } else {
                grad
            }
        }
        InvertMode::Everywhere => {
            if grad > 0.0 {
                grad * (hi - action) / width
            } else {
                grad * (action - lo) / width
            }
        }
    }
}

/// Per-slice `∂Q/∂a` at `a = π(h_{i−1})`, in action units.
pub fn action_gradients<T: Real>(
    critic: &NetworkParams<T>,
    encoder: &WindowEncoder,
    slices: &[Vec<Transition>],
    actions: &[Action],
) -> Result<Vec<[f64; ACTION_DIM]>> {
    let last = check_slices(encoder, slices)?;
    let (_, cache) = critic.forward(&encoder.critic_batch::<T>(slices, last - 1, Some(actions)))?;
    let ones = vec![T::of(encoder.q_scale); slices.len()];
    let dx = critic.last_step_input_grad(&cache, &ones)?;
    let dim = encoder.step_dim();
    let slot = encoder.critic_action_slot();
    Ok(dx
        .chunks_exact(dim)
        .map(|row| {
            let mut g = [0.0; ACTION_DIM];
            for (k, v) in g.iter_mut().enumerate() {
                *v = row[slot + k].f64() / encoder.scale.action;
            }
            g
        })
        .collect())
}

/// One Adam ascent step on `mean Q(h_{i−1}, π(h_{i−1}))` with gradients
/// passed through [`invert_gradient`]. Returns the parameter step norm.
pub fn actor_update<T: Real>(
    actor: &mut NetworkParams<T>,
    critic: &NetworkParams<T>,
    adam: &mut AdamState,
    encoder: &WindowEncoder,
    slices: &[Vec<Transition>],
    mode: InvertMode,
) -> Result<f64> {
    actor_update_with(actor, adam, encoder, slices, mode, |actions| {
        action_gradients(critic, encoder, slices, actions)
    })
}

/// [`actor_update`] with `∂Q/∂a` supplied by `dq_da` for the actions the
/// actor currently proposes.
pub fn actor_update_with<T: Real>(
    actor: &mut NetworkParams<T>,
    adam: &mut AdamState,
    encoder: &WindowEncoder,
    slices: &[Vec<Transition>],
    mode: InvertMode,
    dq_da: impl FnOnce(&[Action]) -> Result<Vec<[f64; ACTION_DIM]>>,
) -> Result<f64> {
    let last = check_slices(encoder, slices)?;
    let (out, cache) = actor.forward(&encoder.actor_batch::<T>(slices, last - 1))?;
    let actions: Vec<Action> = out.chunks_exact(ACTION_DIM).map(|o| encoder.action_from_output(o)).collect();
    let dq = dq_da(&actions)?;
    if dq.len() != actions.len() {
        return Err(Error::Dimension {
            expected: actions.len(),
            got: dq.len(),
            context: "action gradients",
        });
    }
    let n = slices.len() as f64;
    let mut out_grad = Vec::with_capacity(out.len());
    for (a, g) in actions.iter().zip(&dq) {
        for (k, av) in a.to_array().into_iter().enumerate() {
            let g = invert_gradient(g[k], av, 0.0, 100.0, mode);
            // descent on −Q; a = center + half·y
            out_grad.push(T::of(-g * encoder.action_half_range / n));
        }
    }
    let grads = actor.backward(&cache, &out_grad, false)?;
    let before = actor.clone();
    adam.apply(actor, &grads.params)?;
    Ok(actor.distance(&before))
}

/// Sample, then update; `None` while the memory cannot supply a slice.
pub fn train_iteration<T: Real, R: Rng + ?Sized>(
    learner: &mut Learner<T>,
    memory: &HistoryMemory,
    rng: &mut R,
) -> Result<Option<TrainStats>> {
    match memory.sample(rng, learner.batch_size, learner.encoder.window) {
        Some(slices) => learner.update(&slices).map(Some),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::types::Observation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            window: 3,
            actor_hidden: vec![4],
            critic_hidden: vec![4],
            batch_size: 4,
            q_scale: 1.0,
            ..AgentConfig::default()
        }
    }

    fn slices(n: usize, len: usize, seed: u64) -> Vec<Vec<Transition>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..len)
                    .map(|_| Transition {
                        reward: rng.random_range(0.0..1.0),
                        observation: Observation {
                            omega: rng.random_range(1.0..10.0),
                            diameter: rng.random_range(300.0..600.0),
                            fed_length_sum: rng.random_range(0.0..100.0),
                            refs: [rng.random_range(300.0..600.0); 6],
                        },
                        action: Action::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn invert_gradient_examples() {
        for g in [-3.0, 0.0, 2.0] {
            assert_eq!(invert_gradient(g, 50.0, 0.0, 100.0, InvertMode::Literal), g);
        }
        assert_eq!(invert_gradient(2.0, 105.0, 0.0, 100.0, InvertMode::Literal), -0.1);
        assert_eq!(invert_gradient(-2.0, -5.0, 0.0, 100.0, InvertMode::Literal), 0.1);
        // pulling back inside is left alone
        assert_eq!(invert_gradient(-2.0, 105.0, 0.0, 100.0, InvertMode::Literal), -2.0);
        assert_eq!(invert_gradient(2.0, 75.0, 0.0, 100.0, InvertMode::Everywhere), 0.5);
        assert_eq!(invert_gradient(-2.0, 75.0, 0.0, 100.0, InvertMode::Everywhere), -1.5);
    }

    #[test]
    fn gamma_zero_targets_are_rewards() {
        let cfg = small_cfg();
        let l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        let s = slices(5, 5, 1);
        let y = compute_targets(&l.target_actor, &l.target_critic, &l.encoder, &s, 0.0).unwrap();
        for (yi, si) in y.iter().zip(&s) {
            assert_eq!(*yi, si[4].reward);
        }
    }

    #[test]
    fn zero_critic_targets_add_discounted_bias() {
        let cfg = small_cfg();
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        l.target_critic.data_mut().fill(0.0);
        l.target_critic.head_mut().1[0] = 0.7;
        let s = slices(3, 5, 2);
        let y = compute_targets(&l.target_actor, &l.target_critic, &l.encoder, &s, 0.9).unwrap();
        for (yi, si) in y.iter().zip(&s) {
            assert!((yi - (si[4].reward + 0.9 * 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn bellman_fixed_point() {
        let cfg = AgentConfig { q_scale: 100.0, ..small_cfg() };
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        l.target_critic.data_mut().fill(0.0);
        l.target_critic.head_mut().1[0] = 1.0;
        let mut s = slices(2, 5, 3);
        for sl in &mut s {
            for t in sl.iter_mut() {
                t.reward = 1.0;
            }
        }
        let y = compute_targets(&l.target_actor, &l.target_critic, &l.encoder, &s, 0.99).unwrap();
        assert!(y.iter().all(|v| (v - 100.0).abs() < 1e-9));
    }

    #[test]
    fn exact_targets_leave_critic_unchanged() {
        let cfg = small_cfg();
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        let s = slices(4, 5, 4);
        let q = l.critic.predict(&l.encoder.critic_batch::<f64>(&s, 3, None)).unwrap();
        let before = l.critic.clone();
        let loss = critic_update(&mut l.critic, &mut l.critic_adam, &l.encoder, &s, &q).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(l.critic.data(), before.data());
    }

    #[test]
    fn critic_loss_decreases_on_frozen_batch() {
        let cfg = AgentConfig { critic_lr: 1e-3, ..small_cfg() };
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        let s = slices(8, 5, 5);
        let targets: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let mut prev = f64::INFINITY;
        for _ in 0..15 {
            let j = critic_update(&mut l.critic, &mut l.critic_adam, &l.encoder, &s, &targets).unwrap();
            assert!(j < prev, "{j} !< {prev}");
            prev = j;
        }
    }

    #[test]
    fn non_finite_targets_abort() {
        let cfg = small_cfg();
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        let s = slices(2, 5, 6);
        let before = l.critic.clone();
        let err = critic_update(&mut l.critic, &mut l.critic_adam, &l.encoder, &s, &[f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(l.critic.data(), before.data());
    }

    #[test]
    fn zero_critic_head_gives_zero_actor_step() {
        let cfg = small_cfg();
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        l.critic.head_mut().0.fill(0.0);
        let s = slices(4, 5, 7);
        let before = l.actor.clone();
        let step = actor_update(&mut l.actor, &l.critic, &mut l.actor_adam, &l.encoder, &s, InvertMode::Literal).unwrap();
        assert_eq!(step, 0.0);
        assert_eq!(l.actor.data(), before.data());
    }

    #[test]
    fn tau_one_copies_mains_into_targets() {
        let cfg = AgentConfig { tau: 1.0, ..small_cfg() };
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        let s = slices(4, 5, 8);
        l.update(&s).unwrap();
        assert_eq!(l.target_actor.data(), l.actor.data());
        assert_eq!(l.target_critic.data(), l.critic.data());
    }

    #[test]
    fn not_ready_memory_is_a_no_op() {
        let cfg = small_cfg();
        let mut l = Learner::<f64>::new(&cfg, &PlantConfig::default()).unwrap();
        let mut m = HistoryMemory::new(100);
        for t in &slices(1, 4, 9)[0] {
            m.push(*t);
        }
        let before = l.actor.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(train_iteration(&mut l, &m, &mut rng).unwrap().is_none());
        assert_eq!(l.actor, before);
    }
}
