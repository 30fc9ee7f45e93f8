#![allow(dead_code)]

pub mod dense_slam;

use explore_core::exploration_graph::{Edge, ExplorationGraph, Node, NodeKind};
use explore_core::geometry::distance;
use explore_core::gnn::{Dropout, GraphBatch, PolicyParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random well-formed exploration graph with `n` nodes.
pub fn random_graph(n: usize, seed: u64) -> ExplorationGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.max(3);
    let frontiers = rng.gen_range(1..=(n / 3).max(1));
    let landmarks = rng.gen_range(0..=(n - frontiers - 1) / 2);
    let poses = n - frontiers - landmarks;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if i < poses {
            NodeKind::Pose
        } else if i < poses + landmarks {
            NodeKind::Landmark
        } else {
            NodeKind::Frontier
        };
        nodes.push(Node { kind, position: [rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0)], feature: [0.0; 5] });
    }
    let current = poses - 1;
    let cur = nodes[current].position;
    for (i, node) in nodes.iter_mut().enumerate() {
        let (dx, dy) = (node.position[0] - cur[0], node.position[1] - cur[1]);
        let s5 = if i == current {
            0.0
        } else if node.kind == NodeKind::Frontier {
            1.0
        } else {
            -1.0
        };
        node.feature = [rng.gen_range(0.0..2.0), dx.hypot(dy), dy.atan2(dx), rng.gen_range(0.05..0.95), s5];
    }
    let mut pairs = Vec::new();
    for i in 1..poses {
        pairs.push((i - 1, i));
    }
    let frontier_ids: Vec<usize> = (poses + landmarks..n).collect();
    for l in poses..poses + landmarks {
        pairs.push((rng.gen_range(0..poses), l));
        pairs.push((l, frontier_ids[rng.gen_range(0..frontier_ids.len())]));
    }
    pairs.push((current, frontier_ids[rng.gen_range(0..frontier_ids.len())]));
    let edges = pairs.into_iter().map(|(a, b)| Edge { a, b, weight: distance(nodes[a].position, nodes[b].position) }).collect();
    ExplorationGraph { nodes, edges, current, frontiers: frontier_ids }
}

/// `Σ_f c_f · score_f` evaluated without dropout.
pub fn linear_loss(params: &PolicyParameters, batch: &GraphBatch, coeffs: &[f64]) -> f64 {
    let f = params.forward(batch, &mut Dropout::inference()).unwrap();
    f.scores().iter().zip(coeffs).map(|(s, c)| s * c).sum()
}

pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Compares analytic gradients against central differences; returns the
/// number of checked scalars or the first mismatch.
pub fn check_gradients(params: &PolicyParameters, batch: &GraphBatch, coeffs: &[f64], eps: f64) -> Result<usize, String> {
    let forward = params.forward(batch, &mut Dropout::inference()).unwrap();
    let analytic = forward.backward(coeffs);
    let mut p = params.clone();
    let mut checked = 0;
    for t in 0..p.tensors.len() {
        for k in 0..p.tensors[t].data().len() {
            let a = analytic[t].data()[k];
            // A relu kink inside the stencil invalidates the difference; a
            // narrower stencil must then agree instead.
            let numeric = central_difference(&mut p, batch, coeffs, t, k, eps);
            if !close(a, numeric, 1e-4, 1e-8) {
                let refined = central_difference(&mut p, batch, coeffs, t, k, eps * 1e-2);
                if !close(a, refined, 1e-4, 1e-8) {
                    return Err(format!("{}[{k}]: analytic {a:e} vs numeric {numeric:e} / {refined:e}", p.names[t]));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn central_difference(p: &mut PolicyParameters, batch: &GraphBatch, coeffs: &[f64], t: usize, k: usize, eps: f64) -> f64 {
    let orig = p.tensors[t].data()[k];
    p.tensors[t].data_mut()[k] = orig + eps;
    let up = linear_loss(p, batch, coeffs);
    p.tensors[t].data_mut()[k] = orig - eps;
    let down = linear_loss(p, batch, coeffs);
    p.tensors[t].data_mut()[k] = orig;
    (up - down) / (2.0 * eps)
}

/// Episode advanced by `decisions` uniformly random frontier choices.
pub fn fuzzed_episode(seed: u64, size: f64, decisions: usize) -> explore_core::rl::Episode {
    let cfg = explore_core::world::WorldConfig { seed, ..explore_core::world::WorldConfig::square(size) };
    let mut ep = explore_core::rl::Episode::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..decisions {
        if ep.is_done() {
            break;
        }
        let f = rng.gen_range(0..ep.frontiers().len());
        ep.execute(f).unwrap();
    }
    ep
}

/// Two-node graph: the current pose and a single frontier.
pub fn one_action_graph() -> ExplorationGraph {
    let nodes = vec![
        Node { kind: NodeKind::Pose, position: [0.0, 0.0], feature: [0.5, 0.0, 0.0, 0.3, 0.0] },
        Node { kind: NodeKind::Frontier, position: [3.0, 4.0], feature: [2.0, 5.0, 0.9273, 0.5, 1.0] },
    ];
    ExplorationGraph { nodes, edges: vec![Edge { a: 0, b: 1, weight: 5.0 }], current: 0, frontiers: vec![1] }
}

/// Trains `Q(G, f)` on the self-loop transition with reward `r` and
/// discount `gamma`, syncing the target every `sync` updates. Returns the
/// Q-value after each update.
pub fn dqn_fixture(r: f64, gamma: f64, updates: usize, sync: usize, learning_rate: f64, seed: u64) -> Vec<f64> {
    use explore_core::gnn::{Adam, AdamConfig, LayerKind};
    use explore_core::rl::{dqn_update, DqnHyper, TransitionSample};
    let g = one_action_graph();
    let sample = TransitionSample::new(g.clone(), 0, r, Some(g), false);
    let mut params = PolicyParameters::new(LayerKind::Gcn, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut target = params.clone();
    let mut adam = Adam::new(AdamConfig { learning_rate, ..AdamConfig::default() });
    let mut q = Vec::with_capacity(updates);
    for k in 0..updates {
        dqn_update(&[&sample], &mut params, &target, &mut adam, DqnHyper { gamma }).unwrap();
        if (k + 1) % sync == 0 {
            target = params.clone();
        }
        q.push(params.scores(&sample.batch).unwrap()[0]);
    }
    q
}

/// Raw reward of driving from (5, 5) to (9, 5) on a fresh 20 m map, from
/// the library and from closed-form covariance propagation.
pub fn raw_reward_fixture() -> (f64, f64) {
    use explore_core::geometry::Pose2;
    use explore_core::rl::candidate_raw_reward;
    use explore_core::slam::NoiseModel;
    use explore_core::virtual_map::{Belief, VirtualMap};
    use explore_core::world::WorldConfig;
    use nalgebra::{Matrix3, Vector3};

    let cfg = WorldConfig::square(20.0);
    let noise = NoiseModel::from_world(&cfg);
    let vm = VirtualMap::for_world(&cfg);
    assert_eq!(vm.len(), 100);
    let belief = Belief::new(Pose2::new(5.0, 5.0, 0.0), Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 0.001)));
    let alpha = 0.7;

    let (st, sr) = (cfg.translation_noise_sd, cfg.rotation_noise_sd);
    // Heading stays 0, so each 2 m step adds 2·t·cov(y,θ) + t²·var(θ) to var(y).
    let var_t0 = 0.001;
    let var_t1 = var_t0 + sr * sr;
    let traces = [
        0.02,
        (0.01 + st * st) + (0.01 + 4.0 * var_t0 + st * st),
        (0.01 + 2.0 * st * st) + (0.01 + 4.0 * var_t0 + st * st + 2.0 * 2.0 * (2.0 * var_t0) + 4.0 * var_t1 + st * st),
    ];
    let positions = [[5.0, 5.0], [7.0, 5.0], [9.0, 5.0]];
    let mut after = 0.0;
    for iy in 0..10 {
        for ix in 0..10 {
            let c = [1.0 + 2.0 * ix as f64, 1.0 + 2.0 * iy as f64];
            let mut best = 2.0_f64;
            for (p, t) in positions.iter().zip(traces) {
                let d2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
                if d2.sqrt() <= cfg.sensor_range {
                    best = best.min(t + cfg.range_noise_sd.powi(2) + d2 * cfg.bearing_noise_sd.powi(2));
                }
            }
            after += best;
        }
    }
    let expected = 200.0 - after - alpha * 4.0;
    (candidate_raw_reward(&vm, &belief, [9.0, 5.0], &cfg, &noise, alpha), expected)
}
