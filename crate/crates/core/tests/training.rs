use explore_core::gnn::LayerKind;
use explore_core::rl::{train, Algorithm, Episode, TrainConfig};
use explore_core::world::WorldConfig;

fn quick(algorithm: Algorithm, layer: LayerKind, steps: usize) -> TrainConfig {
    TrainConfig { algorithm, layer, hidden: 8, batch_size: 8, max_training_steps: steps, seed: 1, ..TrainConfig::default() }
}

#[test]
fn zero_steps_returns_initial_parameters() {
    let cfg = quick(Algorithm::Dqn, LayerKind::Gcn, 0);
    let a = train(&cfg, &WorldConfig::square(20.0)).unwrap();
    let b = train(&cfg, &WorldConfig::square(20.0)).unwrap();
    assert_eq!(a.steps, 0);
    assert!(a.log.is_empty());
    assert_eq!(a.policy.to_bytes(), b.policy.to_bytes());
}

#[test]
fn smoke_runs_log_rewards_and_are_reproducible() {
    for (alg, layer) in [(Algorithm::Dqn, LayerKind::Gcn), (Algorithm::A2c, LayerKind::GatedGraph)] {
        let cfg = quick(alg, layer, 500);
        let a = train(&cfg, &WorldConfig::square(20.0)).unwrap();
        assert_eq!(a.steps, 500);
        assert!(!a.log.is_empty());
        assert_eq!(a.log.iter().map(|e| e.steps).sum::<usize>(), 500);
        assert!(a.log.iter().all(|e| (-1.0..=1.0).contains(&e.mean_reward)));
        assert!(a.policy.is_finite());
        assert_eq!(a.value.is_some(), alg == Algorithm::A2c);
        let b = train(&cfg, &WorldConfig::square(20.0)).unwrap();
        assert_eq!(a.policy.to_bytes(), b.policy.to_bytes());
    }
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let world = WorldConfig::square(20.0);
    for cfg in [
        TrainConfig { gamma: 1.0, ..TrainConfig::default() },
        TrainConfig { eta: -0.1, ..TrainConfig::default() },
        TrainConfig { batch_size: 64, buffer_capacity: 10, ..TrainConfig::default() },
    ] {
        assert!(train(&cfg, &world).is_err());
    }
}

// This choice sequence parks the robot on a landmark; the near-zero return
// used to make the information matrix indefinite.
#[test]
fn driving_onto_a_landmark_keeps_slam_solvable() {
    let mut ep = Episode::new(&WorldConfig { seed: 11245, ..WorldConfig::square(20.0) }).unwrap();
    for choice in [0, 0, 1, 1] {
        ep.execute(choice).unwrap();
    }
    assert!(ep.estimate().poses.iter().all(|p| p.is_finite()));
}
