use fiberdraw::agent::{AgentConfig, Precision};
use fiberdraw::harness::{
    actor_input_dim, cross_correlation_lag, learning_curve, local_rmse, rmse, run_ablation, run_controller,
    train, AblationVariant, ControllerSpec, MetricsReport, RunRecord, TrainMode,
};
use fiberdraw::plant::PlantConfig;
use fiberdraw::trajectories::random_step;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_agent() -> AgentConfig {
    AgentConfig {
        window: 4,
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        batch_size: 8,
        train_steps: 400,
        episode_steps: 200,
        precision: Precision::F64,
        seed: 17,
        ..AgentConfig::default()
    }
}

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    // smooth-ish random walk so the correlation peak is sharp but unique
    (0..len)
        .map(|_| {
            x = 0.7 * x + rng.random_range(-1.0..1.0);
            x
        })
        .collect()
}

#[test]
fn metric_examples() {
    assert_eq!(rmse(&[5.0, 6.0], &[5.0, 6.0]).unwrap(), 0.0);
    assert!((rmse(&[10.0, 20.0, 30.0], &[0.0, 10.0, 20.0]).unwrap() - 10.0).abs() < 1e-12);
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);

    let reference = noise(1200, 1);
    let trailing: Vec<f64> = (0..1200usize).map(|t| reference[t.saturating_sub(14)]).collect();
    let leading: Vec<f64> = (0..1200).map(|t| reference[(t + 2).min(1199)]).collect();
    assert_eq!(cross_correlation_lag(&reference, &reference, 80, 0.25).unwrap(), 0.0);
    assert_eq!(cross_correlation_lag(&trailing, &reference, 80, 0.25).unwrap(), 3.5);
    assert_eq!(cross_correlation_lag(&leading, &reference, 80, 0.25).unwrap(), -0.5);
    assert!(cross_correlation_lag(&reference[..160], &reference[..160], 80, 0.25).is_err());

    let mut log = vec![0.0; 100];
    log.extend(vec![1.0; 100]);
    let curve = learning_curve(&log, 20).unwrap();
    let ramp: Vec<f64> = curve.iter().copied().filter(|v| *v > 0.0 && *v < 1.0).collect();
    assert_eq!(ramp.len(), 19);
    assert!(ramp.windows(2).all(|w| w[1] > w[0]));
    assert!(learning_curve(&log, 201).is_err());
    assert_eq!(local_rmse(&reference, &reference, 500).unwrap().len(), 701);
}

#[test]
fn metrics_depend_only_on_the_record() {
    let plant = PlantConfig::default();
    let reference = random_step(200, 300.0, 600.0, 800, 4, plant.dt).unwrap();
    let mut ctl = ControllerSpec::OpenLoop { feed: 0.37 }.build(&plant).unwrap();
    let run = run_controller(ctl.as_mut(), &plant, &reference, 4, (0.106, 1.0)).unwrap();
    let mut bytes = Vec::new();
    run.write_csv(&mut bytes).unwrap();
    let back = RunRecord::read_csv(bytes.as_slice(), run.meta.clone()).unwrap();
    let a = run.metrics(plant.dt).unwrap();
    let b = back.metrics(plant.dt).unwrap();
    assert_eq!(a.rmse.to_bits(), b.rmse.to_bits());
    assert_eq!(a.lag, b.lag);
    let direct = MetricsReport::compute(&run.measured(), &run.reference(), plant.dt).unwrap();
    assert_eq!(direct.rmse, a.rmse);
    assert_eq!(a.local_rmse.len(), 800 - 500 + 1);
}

#[test]
fn deterministic_training_reproduces_run_bytes() {
    let plant = PlantConfig::default();
    let cfg = tiny_agent();
    let reference = random_step(200, 300.0, 600.0, 400, 9, plant.dt).unwrap();
    let csv = || {
        let trained = train(&cfg, &plant, TrainMode::Deterministic, |_| {}).unwrap();
        let mut ctl = ControllerSpec::Drl(Box::new(trained.agent)).build(&plant).unwrap();
        let run = run_controller(ctl.as_mut(), &plant, &reference, 9, (0.106, 1.0)).unwrap();
        (trained.rewards, run.to_csv_bytes().unwrap())
    };
    let (rewards_a, a) = csv();
    let (rewards_b, b) = csv();
    assert_eq!(rewards_a.len(), cfg.train_steps);
    assert!(rewards_a.iter().zip(&rewards_b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a, b);
}

#[test]
fn ablation_arms_echo_their_configuration() {
    let plant = PlantConfig::default();
    let base = AgentConfig {
        train_steps: 150,
        ..tiny_agent()
    };
    let with = actor_input_dim(&base);
    let without = actor_input_dim(&AblationVariant::NoWhenLabel.apply(&base).unwrap());
    assert_eq!(with, without + 1);

    let reference = random_step(200, 300.0, 600.0, 300, 2, plant.dt).unwrap();
    let result = run_ablation(AblationVariant::NoLinearMap, &base, &plant, 1, &reference, 2).unwrap();
    assert_eq!((result.baseline.len(), result.ablated.len()), (1, 1));
    let (mapped, raw) = (&result.baseline[0], &result.ablated[0]);
    assert_eq!(mapped.seed, raw.seed);
    assert!(mapped.tracking.meta.controller_config.contains("linear_map = true"));
    assert!(raw.tracking.meta.controller_config.contains("linear_map = false"));
    assert_eq!(raw.tracking.rows.len(), reference.len());
}
