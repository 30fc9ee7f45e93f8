//! Brute-force reference solver: dense Gauss-Newton with central-difference
//! Jacobians, covariance as the dense inverse of JᵀJ. Shares nothing with the
//! library solver beyond the factor list.

use explore_core::geometry::Pose2;
use explore_core::slam::{Estimate, Factor, FactorGraph, NoiseModel};
use explore_core::world::{Measurement, MotionCommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

fn wrap(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a == -PI {
        a = PI;
    }
    a
}

/// Variable vector layout: 3 per pose, then 2 per landmark slot.
pub fn pack(est: &Estimate) -> Vec<f64> {
    let mut x = Vec::new();
    for p in &est.poses {
        x.extend([p.x, p.y, p.theta]);
    }
    for l in &est.landmarks {
        x.extend(l);
    }
    x
}

fn whitened(graph: &FactorGraph, x: &[f64]) -> Vec<f64> {
    let np = graph.num_poses();
    let pose = |i: usize| (x[3 * i], x[3 * i + 1], x[3 * i + 2]);
    let lm = |s: usize| (x[3 * np + 2 * s], x[3 * np + 2 * s + 1]);
    let mut r = Vec::new();
    for f in graph.factors() {
        match *f {
            Factor::Prior { pose: i, mean, sd } => {
                let (px, py, pt) = pose(i);
                r.extend([(px - mean.x) / sd[0], (py - mean.y) / sd[1], wrap(pt - mean.theta) / sd[2]]);
            }
            Factor::Odometry { from, to, command, sd } => {
                let (ax, ay, at) = pose(from);
                let (bx, by, bt) = pose(to);
                let heading = at + command.rotation;
                let px = ax + command.translation * heading.cos();
                let py = ay + command.translation * heading.sin();
                r.extend([(bx - px) / sd[0], (by - py) / sd[1], wrap(bt - heading) / sd[2]]);
            }
            Factor::Measurement { pose: i, landmark, range, bearing, sd } => {
                let (px, py, pt) = pose(i);
                let (lx, ly) = lm(landmark);
                let predicted_range = ((lx - px).powi(2) + (ly - py).powi(2)).sqrt();
                let predicted_bearing = (ly - py).atan2(lx - px) - pt;
                r.extend([(range - predicted_range) / sd[0], wrap(bearing - predicted_bearing) / sd[1]]);
            }
        }
    }
    r
}

fn jacobian(graph: &FactorGraph, x: &[f64]) -> DMatrix<f64> {
    let m = whitened(graph, x).len();
    let mut j = DMatrix::zeros(m, x.len());
    let mut probe = x.to_vec();
    for c in 0..x.len() {
        let h = 1e-6 * x[c].abs().max(1.0);
        probe[c] = x[c] + h;
        let up = whitened(graph, &probe);
        probe[c] = x[c] - h;
        let down = whitened(graph, &probe);
        probe[c] = x[c];
        // Residual angles stay far from ±π, so the stencil never wraps.
        for r in 0..m {
            j[(r, c)] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    j
}

pub fn cost(graph: &FactorGraph, x: &[f64]) -> f64 {
    whitened(graph, x).iter().map(|v| v * v).sum()
}

pub struct DenseSolution {
    pub x: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

/// Plain Gauss-Newton to a fixed point, then Σ = (JᵀJ)⁻¹.
pub fn solve(graph: &FactorGraph, init: &Estimate) -> DenseSolution {
    let mut x = pack(init);
    let np = graph.num_poses();
    for _ in 0..200 {
        let j = jacobian(graph, &x);
        let r = DVector::from_vec(whitened(graph, &x));
        let h = j.transpose() * &j;
        let g = j.transpose() * r;
        let dx = h.lu().solve(&(-g)).expect("information matrix is singular");
        for (v, d) in x.iter_mut().zip(dx.iter()) {
            *v += d;
        }
        for i in 0..np {
            x[3 * i + 2] = wrap(x[3 * i + 2]);
        }
        if dx.amax() < 1e-13 {
            break;
        }
    }
    let j = jacobian(graph, &x);
    let covariance = (j.transpose() * j).try_inverse().expect("information matrix is singular");
    DenseSolution { x, covariance }
}

pub struct Instance {
    pub graph: FactorGraph,
    pub init: Estimate,
}

/// Random small problem: `poses` poses along a noisy random walk, each
/// landmark seen from at least one pose.
pub fn random_instance(seed: u64, poses: usize, landmarks: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = NoiseModel {
        odometry_sd: [0.1, 0.1, 0.02],
        measurement_sd: [0.05, 0.02],
        prior_sd: [1e-3, 1e-3, 1e-3],
        min_range: 0.0,
    };
    let unit = Normal::new(0.0, 1.0).unwrap();
    let start = Pose2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.0..3.0));
    let mut truth = vec![start];
    let mut commands = Vec::new();
    for _ in 1..poses {
        let cmd = MotionCommand::new(rng.gen_range(-0.8..0.8), rng.gen_range(0.5..2.0));
        let p = truth.last().unwrap().compose_motion(cmd.rotation, cmd.translation);
        truth.push(Pose2::new(
            p.x + 0.05 * unit.sample(&mut rng),
            p.y + 0.05 * unit.sample(&mut rng),
            p.theta + 0.01 * unit.sample(&mut rng),
        ));
        commands.push(cmd);
    }
    let lms: Vec<[f64; 2]> = (0..landmarks)
        .map(|_| {
            let anchor = truth[rng.gen_range(0..poses)];
            [anchor.x + rng.gen_range(-4.0..4.0), anchor.y + rng.gen_range(-4.0..4.0)]
        })
        .collect();
    let mut scans: Vec<Vec<Measurement>> = vec![Vec::new(); poses];
    for (id, l) in lms.iter().enumerate() {
        let mut seen = false;
        for (i, p) in truth.iter().enumerate() {
            let last_chance = i + 1 == poses && !seen;
            if rng.gen_bool(0.6) || last_chance {
                let (dx, dy) = (l[0] - p.x, l[1] - p.y);
                let range = (dx * dx + dy * dy).sqrt().max(0.3) + 0.02 * unit.sample(&mut rng);
                let bearing = wrap(dy.atan2(dx) - p.theta + 0.01 * unit.sample(&mut rng));
                scans[i].push(Measurement { landmark_id: 10 + id, range, bearing });
                seen = true;
            }
        }
    }
    let (mut graph, mut init) = FactorGraph::with_prior(start, noise.prior_sd);
    graph.observe(&mut init, 0, &scans[0], &noise).unwrap();
    for i in 1..poses {
        graph.incorporate_step(&mut init, commands[i - 1], &scans[i], &noise).unwrap();
    }
    Instance { graph, init }
}

/// Largest relative discrepancy between the library solution and the dense
/// reference over the estimate vector and every marginal block.
pub fn compare_with_library(inst: &Instance) -> f64 {
    use explore_core::slam::{optimize, Marginals, SolverOptions, VarId};
    let opts = SolverOptions::default();
    let lib = optimize(&inst.graph, &inst.init, &opts);
    let reference = solve(&inst.graph, &inst.init);
    let got = pack(&lib);
    let np = inst.graph.num_poses();
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for (k, (a, b)) in got.iter().zip(&reference.x).enumerate() {
        let d = if k < 3 * np && k % 3 == 2 { wrap(a - b) } else { a - b };
        diff2 += d * d;
        norm2 += b * b;
    }
    let mut worst = (diff2 / norm2.max(1e-300)).sqrt();
    let marginals = Marginals::with_options(&inst.graph, &lib, &opts).unwrap();
    let mut blocks: Vec<(VarId, usize, usize)> = (0..np).map(|i| (VarId::Pose(i), 3 * i, 3)).collect();
    for (slot, &id) in inst.graph.landmark_ids().iter().enumerate() {
        blocks.push((VarId::Landmark(id), 3 * np + 2 * slot, 2));
    }
    for (var, offset, dim) in blocks {
        let got = marginals.covariance(var).unwrap().to_dense();
        let want = reference.covariance.view((offset, offset), (dim, dim)).into_owned();
        worst = worst.max((got - &want).norm() / want.norm());
    }
    worst
}
