use fiberdraw::agent::{
    actor_update_with, compute_reward, critic_update, encode_actor_window, encode_critic_window, invert_gradient,
    Action, AgentConfig, HistoryMemory, InvertMode, Learner, Observation, RecentHistoryBuffer, Transition,
    WindowEncoder,
};
use fiberdraw::nn::{AdamConfig, AdamState};
use fiberdraw::plant::PlantConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn small_cfg() -> AgentConfig {
    AgentConfig {
        window: 3,
        actor_hidden: vec![4],
        critic_hidden: vec![4],
        batch_size: 4,
        ..AgentConfig::default()
    }
}

fn observation(rng: &mut ChaCha8Rng) -> Observation {
    let mut refs = [0.0; 6];
    refs.iter_mut().for_each(|r| *r = rng.random_range(300.0..600.0));
    Observation::new(
        rng.random_range(1.0..10.0),
        rng.random_range(300.0..600.0),
        rng.random_range(0.0..100.0),
        refs,
    )
    .unwrap()
}

fn transition(rng: &mut ChaCha8Rng) -> Transition {
    Transition {
        reward: rng.random_range(-1.0..1.0),
        observation: observation(rng),
        action: Action::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
    }
}

fn slices(n: usize, window: usize, seed: u64) -> Vec<Vec<Transition>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..window + 2).map(|_| transition(&mut rng)).collect())
        .collect()
}

#[test]
fn minibatch_end_indices_are_uniform() {
    let window = 8;
    let mut memory = HistoryMemory::new(5_000);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    memory.begin_episode();
    for _ in 0..1_000 {
        memory.push(transition(&mut rng));
    }
    let valid = memory.valid_end_count(window) as usize;
    assert_eq!(valid, 1_000 - (window + 1));
    let mut counts = vec![0u64; valid];
    let first = (window + 1) as u64;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(2);
    let mut drawn = 0;
    while drawn < 100_000 {
        for end in memory.sample_ends(&mut sample_rng, 100, window).unwrap() {
            counts[(end - first) as usize] += 1;
        }
        drawn += 100;
    }
    let expect = drawn as f64 / valid as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let critical = ChiSquared::new((valid - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "χ² = {stat:.1}, critical {critical:.1}");
}

#[test]
fn readiness_boundary() {
    let window = 5;
    let mut memory = HistoryMemory::new(100);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    memory.begin_episode();
    let pushed: Vec<Transition> = (0..window + 2).map(|_| transition(&mut rng)).collect();
    for t in &pushed[..window + 1] {
        memory.push(*t);
    }
    assert!(memory.sample(&mut rng, 4, window).is_none());
    memory.push(pushed[window + 1]);
    let batch = memory.sample(&mut rng, 4, window).unwrap();
    assert_eq!(batch.len(), 4);
    assert!(batch.iter().all(|s| s == &pushed));
}

#[test]
fn critic_loss_gradient_matches_finite_differences() {
    let cfg = AgentConfig {
        batch_size: 1,
        ..small_cfg()
    };
    let plant = PlantConfig::default();
    let learner = Learner::<f64>::new(&cfg, &plant).unwrap();
    let enc = learner.encoder.clone();
    let batch = slices(1, cfg.window, 4);
    let targets = vec![0.37];
    let loss = |critic: &fiberdraw::nn::NetworkParams<f64>| {
        let q = critic.predict(&enc.critic_batch::<f64>(&batch, cfg.window, None)).unwrap();
        (targets[0] - enc.q_from_output(q[0])).powi(2)
    };
    let mut critic = learner.critic.clone();
    let mut adam = AdamState::new(AdamConfig::with_lr(1e-9), critic.len());
    let j = critic_update(&mut critic, &mut adam, &enc, &batch, &targets).unwrap();
    assert!((j - loss(&learner.critic)).abs() < 1e-12);
    // first moment after one step holds (1 − β₁)·g
    let h = 1e-6;
    for k in (0..learner.critic.len()).step_by(7) {
        let g = adam.m[k] / (1.0 - adam.config.beta1);
        let mut plus = learner.critic.clone();
        plus.data_mut()[k] += h;
        let mut minus = learner.critic.clone();
        minus.data_mut()[k] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-4, "param {k}: {g} vs {fd}");
    }
}

#[test]
fn actor_climbs_a_quadratic_critic() {
    let cfg = small_cfg();
    let plant = PlantConfig::default();
    let learner = Learner::<f64>::new(&cfg, &plant).unwrap();
    let enc = learner.encoder.clone();
    let mut actor = learner.actor.clone();
    // start well away from the optimum
    actor.head_mut().1.copy_from_slice(&[0.6, -0.5]);
    let mut adam = AdamState::new(AdamConfig::with_lr(1e-2), actor.len());
    let batch = slices(8, cfg.window, 5);
    let gap = |actor: &fiberdraw::nn::NetworkParams<f64>| {
        let y = actor.predict(&enc.actor_batch::<f64>(&batch, cfg.window)).unwrap();
        y.chunks_exact(2)
            .map(|o| {
                let a = enc.action_from_output(o);
                (a.spool_input - 50.0).abs() + (a.extruder_input - 50.0).abs()
            })
            .sum::<f64>()
            / batch.len() as f64
    };
    let start = gap(&actor);
    for _ in 0..300 {
        actor_update_with(&mut actor, &mut adam, &enc, &batch, InvertMode::Literal, |actions| {
            Ok(actions
                .iter()
                .map(|a| [-2.0 * (a.spool_input - 50.0), -2.0 * (a.extruder_input - 50.0)])
                .collect())
        })
        .unwrap();
    }
    let end = gap(&actor);
    assert!(start > 40.0, "{start}");
    assert!(end < 0.1 * start, "{start} → {end}");
}

#[test]
fn out_of_range_action_is_pushed_back_down() {
    let cfg = small_cfg();
    let plant = PlantConfig::default();
    let learner = Learner::<f64>::new(&cfg, &plant).unwrap();
    let enc = learner.encoder.clone();
    let mut actor = learner.actor.clone();
    {
        let (w, b) = actor.head_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        b.copy_from_slice(&[1.1, 1.1]);
    }
    let batch = slices(4, cfg.window, 6);
    let actions = |actor: &fiberdraw::nn::NetworkParams<f64>| {
        let y = actor.predict(&enc.actor_batch::<f64>(&batch, cfg.window)).unwrap();
        y.chunks_exact(2).map(|o| enc.action_from_output(o)).collect::<Vec<_>>()
    };
    assert!(actions(&actor).iter().all(|a| (a.spool_input - 105.0).abs() < 1e-12));
    let mut adam = AdamState::new(AdamConfig::with_lr(1e-3), actor.len());
    actor_update_with(&mut actor, &mut adam, &enc, &batch, InvertMode::Literal, |a| Ok(vec![[2.0, 2.0]; a.len()]))
        .unwrap();
    for a in actions(&actor) {
        assert!(a.spool_input < 105.0 && a.extruder_input < 105.0, "{a:?}");
    }
}

#[test]
fn targets_trail_the_actor_within_the_contraction_bound() {
    let cfg = AgentConfig {
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        tau: 0.2,
        ..small_cfg()
    };
    let plant = PlantConfig::default();
    let mut learner = Learner::<f64>::new(&cfg, &plant).unwrap();
    let mut gap = learner.target_actor.distance(&learner.actor);
    assert_eq!(gap, 0.0);
    for k in 0..30 {
        let before = learner.actor.clone();
        learner.update(&slices(4, cfg.window, 100 + k)).unwrap();
        let step = learner.actor.distance(&before);
        let next = learner.target_actor.distance(&learner.actor);
        assert!(next <= (1.0 - cfg.tau) * (gap + step) + 1e-12);
        gap = next;
    }
    // frozen mains: the gap contracts by (1 − τ) per soft update
    let frozen = learner.actor.clone();
    for _ in 0..10 {
        learner.target_actor.soft_update_from(&frozen, cfg.tau).unwrap();
        let next = learner.target_actor.distance(&frozen);
        assert!((next - (1.0 - cfg.tau) * gap).abs() < 1e-12);
        gap = next;
    }
}

fn buffer_from(pairs: &[(Action, Observation)], window: usize) -> RecentHistoryBuffer {
    let mut b = RecentHistoryBuffer::new(window);
    for (a, o) in pairs {
        b.push(*a, *o);
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn literal_inversion_never_pushes_further_out(a in -50.0f64..150.0, g in -10.0f64..10.0, lr in 1e-4f64..1.0) {
        let c = invert_gradient(g, a, 0.0, 100.0, InvertMode::Literal);
        // first Adam ascent step moves by lr·sign
        let next = a + lr * c.signum() * f64::from(u8::from(c != 0.0));
        let out = |x: f64| (x - 100.0).max(0.0 - x).max(0.0);
        if !(0.0..=100.0).contains(&a) {
            prop_assert!(out(next) <= out(a) + 1e-12);
        }
        prop_assert!(out(next) <= out(a) + lr);
        if (0.0..=100.0).contains(&a) {
            prop_assert_eq!(c, g);
        }
    }

    #[test]
    fn reward_is_bounded(d in 0.0f64..1000.0, r in 0.0f64..1000.0, f in 0.09f64..=0.56) {
        let bound = 0.106 * 0.56 + 1.0;
        let v = compute_reward(d, r, f, 0.106, 1.0);
        prop_assert!(v <= bound + 1e-15);
        prop_assert_eq!(compute_reward(r, r, 0.56, 0.106, 1.0), bound);
    }

    #[test]
    fn memory_slices_replay_what_was_pushed(
        lengths in prop::collection::vec(1usize..40, 1..6),
        capacity in 12usize..80,
        seed in 0u64..1000,
    ) {
        let window = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut memory = HistoryMemory::new(capacity);
        let mut log: Vec<(usize, Transition)> = Vec::new();
        for (e, &n) in lengths.iter().enumerate() {
            memory.begin_episode();
            for _ in 0..n {
                let t = transition(&mut rng);
                memory.push(t);
                log.push((e, t));
            }
        }
        let total = log.len() as u64;
        if let Some(ends) = memory.sample_ends(&mut rng, 16, window) {
            for end in ends {
                prop_assert!(end < total && end + capacity as u64 >= total + (window as u64 + 1));
                let slice = memory.slice_ending_at(end, window).unwrap();
                let start = (end - window as u64 - 1) as usize;
                let episode = log[start].0;
                for (k, t) in slice.iter().enumerate() {
                    prop_assert_eq!(*t, log[start + k].1);
                    prop_assert_eq!(log[start + k].0, episode);
                }
            }
        }
    }

    #[test]
    fn actor_encoding_is_injective(seed in 0u64..1000, k in 0usize..4, field in 0usize..4) {
        let cfg = AgentConfig { window: 4, ..AgentConfig::default() };
        let enc = WindowEncoder::new(&cfg, &PlantConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(Action, Observation)> = (0..4)
            .map(|_| (Action::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)), observation(&mut rng)))
            .collect();
        let mut changed = pairs.clone();
        match field {
            0 => changed[k].0.spool_input += 1.0,
            1 => changed[k].0.extruder_input -= 1.0,
            2 => changed[k].1.diameter += 1.0,
            _ => changed[k].1.refs[5] += 1.0,
        }
        let a = encode_actor_window(&buffer_from(&pairs, 4), &enc).unwrap();
        let b = encode_actor_window(&buffer_from(&changed, 4), &enc).unwrap();
        prop_assert_ne!(a, b);
        let ca: Vec<(Observation, Action)> = pairs.iter().map(|(a, o)| (*o, *a)).collect();
        let cb: Vec<(Observation, Action)> = changed.iter().map(|(a, o)| (*o, *a)).collect();
        prop_assert_ne!(encode_critic_window(&ca, &enc).unwrap(), encode_critic_window(&cb, &enc).unwrap());
    }
}
