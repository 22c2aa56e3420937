use serde::{Deserialize, Serialize};

use super::config::AgentConfig;
use super::memory::{RecentHistoryBuffer, Transition};
use super::types::{Action, Observation, ACTION_DIM, OBS_FEATURES};
use crate::error::{Error, Result};
use crate::nn::{Real, WindowBatch};
use crate::plant::PlantConfig;

/// Fixed divisors that bring raw quantities to roughly unit range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub diameter: f64,
    pub omega: f64,
    pub fed_length: f64,
    pub action: f64,
    pub label: f64,
}

impl FeatureScale {
    pub fn new(agent: &AgentConfig, plant: &PlantConfig) -> Self {
        Self {
            diameter: agent.diameter_scale,
            omega: plant.omega_max,
            fed_length: plant.feed_max * agent.episode_steps as f64 * plant.dt,
            action: 100.0,
            label: 100.0,
        }
    }
}

/// Turns windows of history into network inputs and network outputs into
/// actions and Q-values.
///
/// Actor step layout: `[a_{t−1} | o_t | label]`.
/// Critic step layout: `[o_t | a_t | label]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEncoder {
    pub scale: FeatureScale,
    pub window: usize,
    pub when_labels: bool,
    pub when_label_max: f64,
    pub action_center: f64,
    pub action_half_range: f64,
    pub q_scale: f64,
}

impl WindowEncoder {
    pub fn new(agent: &AgentConfig, plant: &PlantConfig) -> Self {
        Self {
            scale: FeatureScale::new(agent, plant),
            window: agent.window,
            when_labels: agent.when_labels,
            when_label_max: agent.when_label_max,
            action_center: 50.0,
            action_half_range: 50.0,
            q_scale: agent.q_scale,
        }
    }

    pub fn step_dim(&self) -> usize {
        OBS_FEATURES + ACTION_DIM + usize::from(self.when_labels)
    }

    /// Offset of the action inside a critic step.
    pub fn critic_action_slot(&self) -> usize {
        OBS_FEATURES
    }

    /// Label for the step `age` places before the newest one.
    pub fn when_label(&self, age: usize) -> f64 {
        if self.window <= 1 {
            0.0
        } else {
            self.when_label_max * age as f64 / (self.window - 1) as f64
        }
    }

    fn write_obs<T: Real>(&self, o: &Observation, out: &mut [T]) {
        let s = &self.scale;
        out[0] = T::of(o.omega / s.omega);
        out[1] = T::of(o.diameter / s.diameter);
        out[2] = T::of(o.fed_length_sum / s.fed_length);
        for (slot, r) in out[3..OBS_FEATURES].iter_mut().zip(&o.refs) {
            *slot = T::of(r / s.diameter);
        }
    }

    fn write_action<T: Real>(&self, a: &Action, out: &mut [T]) {
        out[0] = T::of(a.spool_input / self.scale.action);
        out[1] = T::of(a.extruder_input / self.scale.action);
    }

    fn write_label<T: Real>(&self, age: usize, out: &mut [T]) {
        if self.when_labels {
            out[0] = T::of(self.when_label(age) / self.scale.label);
        }
    }

    pub fn write_actor_step<T: Real>(&self, prev: &Action, obs: &Observation, age: usize, out: &mut [T]) {
        self.write_action(prev, &mut out[..ACTION_DIM]);
        self.write_obs(obs, &mut out[ACTION_DIM..ACTION_DIM + OBS_FEATURES]);
        self.write_label(age, &mut out[ACTION_DIM + OBS_FEATURES..]);
    }

    pub fn write_critic_step<T: Real>(&self, obs: &Observation, action: &Action, age: usize, out: &mut [T]) {
        self.write_obs(obs, &mut out[..OBS_FEATURES]);
        self.write_action(action, &mut out[OBS_FEATURES..OBS_FEATURES + ACTION_DIM]);
        self.write_label(age, &mut out[OBS_FEATURES + ACTION_DIM..]);
    }

    /// Single-window actor input from the live buffer.
    pub fn actor_batch_from_buffer<T: Real>(&self, buffer: &RecentHistoryBuffer) -> Result<WindowBatch<T>> {
        if !buffer.is_warm() || buffer.window() != self.window {
            return Err(Error::ColdBuffer);
        }
        let mut batch = WindowBatch::zeros(self.window, 1, self.step_dim());
        for (t, (a, o)) in buffer.pairs().enumerate() {
            self.write_actor_step(a, o, self.window - 1 - t, batch.row_mut(t, 0));
        }
        Ok(batch)
    }

    /// Actor windows whose newest observation is `slice[end]`.
    pub fn actor_batch<T: Real>(&self, slices: &[Vec<Transition>], end: usize) -> WindowBatch<T> {
        let l = self.window;
        assert!(end >= l, "actor window needs the action before its first observation");
        let mut batch = WindowBatch::zeros(l, slices.len(), self.step_dim());
        for (b, s) in slices.iter().enumerate() {
            for t in 0..l {
                let j = end + 1 + t - l;
                self.write_actor_step(&s[j - 1].action, &s[j].observation, l - 1 - t, batch.row_mut(t, b));
            }
        }
        batch
    }

    /// Critic windows ending at `slice[end]`; the newest action is replaced
    /// by `last_actions[b]` when given.
    pub fn critic_batch<T: Real>(
        &self,
        slices: &[Vec<Transition>],
        end: usize,
        last_actions: Option<&[Action]>,
    ) -> WindowBatch<T> {
        let l = self.window;
        assert!(end + 1 >= l, "critic window runs past the slice start");
        let mut batch = WindowBatch::zeros(l, slices.len(), self.step_dim());
        for (b, s) in slices.iter().enumerate() {
            for t in 0..l {
                let j = end + 1 + t - l;
                let action = match last_actions {
                    Some(acts) if t == l - 1 => &acts[b],
                    _ => &s[j].action,
                };
                self.write_critic_step(&s[j].observation, action, l - 1 - t, batch.row_mut(t, b));
            }
        }
        batch
    }

    pub fn action_from_output<T: Real>(&self, y: &[T]) -> Action {
        Action::new(
            self.action_center + self.action_half_range * y[0].f64(),
            self.action_center + self.action_half_range * y[1].f64(),
        )
    }

    pub fn q_from_output<T: Real>(&self, y: T) -> f64 {
        self.q_scale * y.f64()
    }
}

fn to_rows(batch: WindowBatch<f64>) -> Vec<Vec<f64>> {
    batch.data.chunks_exact(batch.dim).map(<[f64]>::to_vec).collect()
}

/// Actor input sequence for the live buffer, oldest step first.
pub fn encode_actor_window(buffer: &RecentHistoryBuffer, encoder: &WindowEncoder) -> Result<Vec<Vec<f64>>> {
    encoder.actor_batch_from_buffer(buffer).map(to_rows)
}

/// Critic input sequence for `(o, a)` pairs, oldest first.
pub fn encode_critic_window(pairs: &[(Observation, Action)], encoder: &WindowEncoder) -> Result<Vec<Vec<f64>>> {
    if pairs.len() != encoder.window {
        return Err(Error::Dimension {
            expected: encoder.window,
            got: pairs.len(),
            context: "critic window",
        });
    }
    let mut batch = WindowBatch::zeros(encoder.window, 1, encoder.step_dim());
    for (t, (o, a)) in pairs.iter().enumerate() {
        encoder.write_critic_step(o, a, encoder.window - 1 - t, batch.row_mut(t, 0));
    }
    Ok(to_rows(batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(k: f64) -> Observation {
        Observation {
            omega: 1.0 + k,
            diameter: 400.0 + k,
            fed_length_sum: 10.0 * k,
            refs: [450.0 + k; 6],
        }
    }

    fn encoder(window: usize, labels: bool) -> WindowEncoder {
        let agent = AgentConfig {
            window,
            when_labels: labels,
            ..AgentConfig::default()
        };
        WindowEncoder::new(&agent, &PlantConfig::default())
    }

    #[test]
    fn labels_run_from_oldest_100_to_newest_0() {
        let enc = encoder(50, true);
        let mut buf = RecentHistoryBuffer::new(50);
        for k in 0..50 {
            buf.push(Action::new(k as f64, 0.0), obs(k as f64));
        }
        let rows = encode_actor_window(&buf, &enc).unwrap();
        assert_eq!(rows.len(), 50);
        let labels: Vec<f64> = rows.iter().map(|r| r[enc.step_dim() - 1] * 100.0).collect();
        assert!((labels[0] - 100.0).abs() < 1e-12);
        assert_eq!(labels[49], 0.0);
        for w in labels.windows(2) {
            assert!((w[0] - w[1] - 100.0 / 49.0).abs() < 1e-9);
        }
        // chronological: oldest first
        assert_eq!(rows[0][0], 0.0);
        assert!((rows[49][0] - 0.49).abs() < 1e-15);
    }

    #[test]
    fn label_toggle_shrinks_dim() {
        assert_eq!(encoder(50, true).step_dim(), encoder(50, false).step_dim() + 1);
        let enc = encoder(3, false);
        let rows = encode_critic_window(&[(obs(0.0), Action::new(1.0, 2.0)); 3], &enc).unwrap();
        assert!(rows.iter().all(|r| r.len() == enc.step_dim()));
    }

    #[test]
    fn cold_buffer_is_an_error() {
        let enc = encoder(4, true);
        let mut buf = RecentHistoryBuffer::new(4);
        buf.push(Action::new(0.0, 0.0), obs(0.0));
        assert!(matches!(encode_actor_window(&buf, &enc), Err(Error::ColdBuffer)));
    }

    #[test]
    fn critic_pairs_observation_with_same_step_action() {
        let enc = encoder(3, true);
        let slice: Vec<Transition> = (0..5)
            .map(|k| Transition {
                reward: 0.0,
                observation: obs(k as f64),
                action: Action::new(10.0 * k as f64, 0.0),
            })
            .collect();
        let c = enc.critic_batch::<f64>(std::slice::from_ref(&slice), 3, None);
        let a = enc.actor_batch::<f64>(std::slice::from_ref(&slice), 3);
        for t in 0..3 {
            let j = 1 + t;
            let cr = c.row(t, 0);
            assert_eq!(cr[1] * 600.0, 400.0 + j as f64);
            assert!((cr[OBS_FEATURES] * 100.0 - 10.0 * j as f64).abs() < 1e-12);
            let ar = a.row(t, 0);
            assert!((ar[0] * 100.0 - 10.0 * (j - 1) as f64).abs() < 1e-12);
            assert_eq!(ar[ACTION_DIM + 1] * 600.0, 400.0 + j as f64);
        }
        let replaced = enc.critic_batch::<f64>(std::slice::from_ref(&slice), 3, Some(&[Action::new(77.0, 0.0)]));
        assert!((replaced.row(2, 0)[OBS_FEATURES] - 0.77).abs() < 1e-15);
        assert_eq!(replaced.row(1, 0), c.row(1, 0));
    }

    #[test]
    fn encoding_ignores_absolute_time_and_is_injective() {
        let enc = encoder(3, true);
        let mut a = RecentHistoryBuffer::new(3);
        let mut b = RecentHistoryBuffer::new(3);
        for k in 0..3 {
            a.push(Action::new(k as f64, 1.0), obs(k as f64));
        }
        b.push(Action::new(99.0, 9.0), obs(50.0));
        for k in 0..3 {
            b.push(Action::new(k as f64, 1.0), obs(k as f64));
        }
        assert_eq!(encode_actor_window(&a, &enc).unwrap(), encode_actor_window(&b, &enc).unwrap());
        let mut c = a.clone();
        c.push(Action::new(2.0, 1.0), obs(2.5));
        assert_ne!(encode_actor_window(&a, &enc).unwrap(), encode_actor_window(&c, &enc).unwrap());
    }
}
