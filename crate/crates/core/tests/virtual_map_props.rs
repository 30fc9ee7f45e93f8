use std::collections::BTreeSet;

use explore_core::geometry::{distance, Pose2};
use explore_core::slam::NoiseModel;
use explore_core::virtual_map::{simulate_candidate, Belief, VirtualMap};
use explore_core::world::WorldConfig;
use nalgebra::Matrix3;
use proptest::prelude::*;

fn pose_strategy(size: f64) -> impl Strategy<Value = Pose2> {
    (-5.0..size + 5.0, -5.0..size + 5.0, -3.1..3.1f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
}

fn cov_strategy() -> impl Strategy<Value = Matrix3<f64>> {
    (0.0..0.5f64, 0.0..0.5f64, -0.1..0.1f64, 0.0..0.05f64).prop_map(|(a, b, c, d)| {
        let c = c * (a * b).sqrt();
        Matrix3::new(a, c, 0.0, c, b, 0.0, 0.0, 0.0, d)
    })
}

#[test]
fn fresh_forty_meter_map_utility() {
    let vm = VirtualMap::for_world(&WorldConfig::square(40.0));
    assert_eq!(vm.len(), 400);
    assert_eq!(vm.utility(), 800.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn updates_never_raise_utility_and_stay_bounded(path in prop::collection::vec((pose_strategy(30.0), cov_strategy()), 1..20)) {
        let mut vm = VirtualMap::for_world(&WorldConfig::square(30.0));
        let mut last = vm.utility();
        for (pose, cov) in path {
            vm.update(&[pose], &[cov]).unwrap();
            let u = vm.utility();
            prop_assert!(u <= last);
            last = u;
        }
        let (nx, ny) = vm.dims();
        for iy in 0..ny {
            for ix in 0..nx {
                let c = vm.covariance(ix, iy);
                let t = c.trace();
                prop_assert!(t > 0.0 && t <= 2.0);
                prop_assert_eq!(c[(0, 1)], c[(1, 0)]);
                prop_assert!(c.determinant() >= -1e-15);
            }
        }
    }

    #[test]
    fn updated_cells_are_exactly_those_in_range(pose in pose_strategy(30.0)) {
        let cfg = WorldConfig::square(30.0);
        let mut vm = VirtualMap::for_world(&cfg);
        let before = vm.clone();
        vm.update(&[pose], &[Matrix3::zeros()]).unwrap();
        let (nx, ny) = vm.dims();
        let mut changed = BTreeSet::new();
        let mut expected = BTreeSet::new();
        for iy in 0..ny {
            for ix in 0..nx {
                if vm.covariance(ix, iy) != before.covariance(ix, iy) {
                    changed.insert((ix, iy));
                }
                if distance(vm.cell_center(ix, iy), pose.position()) <= cfg.sensor_range {
                    expected.insert((ix, iy));
                }
            }
        }
        prop_assert_eq!(changed, expected);
    }

    #[test]
    fn candidate_simulation_leaves_map_untouched(pose in pose_strategy(30.0), goal in (0.0..30.0f64, 0.0..30.0f64), cov in cov_strategy()) {
        let cfg = WorldConfig::square(30.0);
        let noise = NoiseModel::from_world(&cfg);
        let mut vm = VirtualMap::for_world(&cfg);
        vm.update(&[pose], &[cov]).unwrap();
        let snapshot = vm.clone();
        let fingerprint = vm.fingerprint();
        let out = simulate_candidate(&vm, &Belief::new(pose, cov), [goal.0, goal.1], &cfg, &noise);
        prop_assert_eq!(vm.fingerprint(), fingerprint);
        prop_assert_eq!(&vm, &snapshot);
        prop_assert!(out.predicted_utility <= vm.utility());
        prop_assert!((out.travel_cost - pose.distance_to([goal.0, goal.1])).abs() < 1e-12);
    }
}
