use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn, Matrix2, Matrix3};

use super::envelope::{EnvelopeCholesky, EnvelopeMatrix};
use super::graph::{measurement_residual, odometry_residual, prior_residual, Estimate, Factor, FactorGraph, VarId};
use crate::geometry::{wrap_angle, Pose2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    pub initial_lambda: f64,
    /// Problems with fewer variables are factored densely.
    pub dense_below: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 100, relative_tolerance: 1e-9, initial_lambda: 1e-6, dense_below: 50 }
    }
}

struct Layout {
    num_poses: usize,
    dim: usize,
}

impl Layout {
    fn new(graph: &FactorGraph) -> Self {
        Self { num_poses: graph.num_poses(), dim: 3 * graph.num_poses() + 2 * graph.num_landmarks() }
    }

    fn pose(&self, i: usize) -> usize {
        3 * i
    }

    fn landmark(&self, slot: usize) -> usize {
        3 * self.num_poses + 2 * slot
    }

    fn var_offset(&self, graph: &FactorGraph, var: VarId) -> Result<(usize, usize)> {
        match var {
            VarId::Pose(i) if i < self.num_poses => Ok((self.pose(i), 3)),
            VarId::Landmark(id) => graph
                .landmark_slot(id)
                .map(|s| (self.landmark(s), 2))
                .ok_or_else(|| Error::UnknownVariable(format!("landmark {id}"))),
            VarId::Pose(i) => Err(Error::UnknownVariable(format!("pose {i}"))),
        }
    }
}

/// One whitened factor linearization: residual and Jacobian blocks keyed by
/// variable offset.
struct Linearized {
    residual: Vec<f64>,
    blocks: Vec<(usize, DMatrix<f64>)>,
}

fn linearize_factor(f: &Factor, est: &Estimate, layout: &Layout) -> Linearized {
    match f {
        Factor::Prior { pose, mean, sd } => {
            let e = prior_residual(&est.poses[*pose], mean);
            let j = DMatrix::from_diagonal(&DVector::from_vec(sd.iter().map(|s| 1.0 / s).collect()));
            Linearized { residual: (0..3).map(|k| e[k] / sd[k]).collect(), blocks: vec![(layout.pose(*pose), j)] }
        }
        Factor::Odometry { from, to, command, sd } => {
            let a = est.poses[*from];
            let b = est.poses[*to];
            let e = odometry_residual(&a, &b, command);
            let th = wrap_angle(a.theta + command.rotation);
            let t = command.translation;
            let mut ja = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, t * th.sin(), 0.0, -1.0, -t * th.cos(), 0.0, 0.0, -1.0]);
            let mut jb = DMatrix::<f64>::identity(3, 3);
            for k in 0..3 {
                ja.row_mut(k).scale_mut(1.0 / sd[k]);
                jb.row_mut(k).scale_mut(1.0 / sd[k]);
            }
            Linearized {
                residual: (0..3).map(|k| e[k] / sd[k]).collect(),
                blocks: vec![(layout.pose(*from), ja), (layout.pose(*to), jb)],
            }
        }
        Factor::Measurement { pose, landmark, range, bearing, sd } => {
            let p = est.poses[*pose];
            let l = est.landmarks[*landmark];
            let e = measurement_residual(&p, l, *range, *bearing);
            let dx = l[0] - p.x;
            let dy = l[1] - p.y;
            let q = (dx * dx + dy * dy).max(1e-18);
            let r = q.sqrt();
            let mut jp = DMatrix::from_row_slice(2, 3, &[dx / r, dy / r, 0.0, -dy / q, dx / q, 1.0]);
            let mut jl = DMatrix::from_row_slice(2, 2, &[-dx / r, -dy / r, dy / q, -dx / q]);
            for k in 0..2 {
                jp.row_mut(k).scale_mut(1.0 / sd[k]);
                jl.row_mut(k).scale_mut(1.0 / sd[k]);
            }
            Linearized {
                residual: vec![e[0] / sd[0], e[1] / sd[1]],
                blocks: vec![(layout.pose(*pose), jp), (layout.landmark(*landmark), jl)],
            }
        }
    }
}

fn cost(graph: &FactorGraph, est: &Estimate) -> f64 {
    graph
        .factors()
        .iter()
        .map(|f| match f {
            Factor::Prior { pose, mean, sd } => {
                let e = prior_residual(&est.poses[*pose], mean);
                (0..3).map(|k| (e[k] / sd[k]).powi(2)).sum::<f64>()
            }
            Factor::Odometry { from, to, command, sd } => {
                let e = odometry_residual(&est.poses[*from], &est.poses[*to], command);
                (0..3).map(|k| (e[k] / sd[k]).powi(2)).sum::<f64>()
            }
            Factor::Measurement { pose, landmark, range, bearing, sd } => {
                let e = measurement_residual(&est.poses[*pose], est.landmarks[*landmark], *range, *bearing);
                (e[0] / sd[0]).powi(2) + (e[1] / sd[1]).powi(2)
            }
        })
        .sum()
}

/// Envelope start per scalar row for the trajectory-then-landmarks ordering.
fn envelope_first(graph: &FactorGraph, layout: &Layout) -> Vec<usize> {
    let mut first: Vec<usize> = (0..layout.dim).collect();
    let mut var_first = |offset: usize, dim: usize, other: usize| {
        for r in offset..offset + dim {
            first[r] = first[r].min(other);
        }
    };
    for i in 0..layout.num_poses {
        var_first(layout.pose(i), 3, layout.pose(i));
    }
    for s in 0..graph.num_landmarks() {
        var_first(layout.landmark(s), 2, layout.landmark(s));
    }
    for f in graph.factors() {
        let vars: Vec<(usize, usize)> = match f {
            Factor::Prior { pose, .. } => vec![(layout.pose(*pose), 3)],
            Factor::Odometry { from, to, .. } => vec![(layout.pose(*from), 3), (layout.pose(*to), 3)],
            Factor::Measurement { pose, landmark, .. } => {
                vec![(layout.pose(*pose), 3), (layout.landmark(*landmark), 2)]
            }
        };
        for &(a, da) in &vars {
            for &(b, _) in &vars {
                if b < a {
                    var_first(a, da, b);
                }
            }
        }
    }
    first
}

/// Gauss-Newton information matrix `JᵀJ` and gradient `Jᵀe`.
fn normal_equations(graph: &FactorGraph, est: &Estimate, layout: &Layout) -> (EnvelopeMatrix, Vec<f64>) {
    let mut h = EnvelopeMatrix::zeros(envelope_first(graph, layout));
    let mut g = vec![0.0; layout.dim];
    for f in graph.factors() {
        let lin = linearize_factor(f, est, layout);
        for (a, ja) in &lin.blocks {
            for c in 0..ja.ncols() {
                let mut s = 0.0;
                for k in 0..ja.nrows() {
                    s += ja[(k, c)] * lin.residual[k];
                }
                g[a + c] += s;
            }
            for (b, jb) in &lin.blocks {
                if b > a {
                    continue;
                }
                let block = ja.transpose() * jb;
                for r in 0..block.nrows() {
                    for c in 0..block.ncols() {
                        let (rr, cc) = (a + r, b + c);
                        if a == b && cc > rr {
                            continue;
                        }
                        h.add(rr, cc, block[(r, c)]);
                    }
                }
            }
        }
    }
    (h, g)
}

enum Factorization {
    Dense(Cholesky<f64, Dyn>),
    Envelope(EnvelopeCholesky),
}

impl Factorization {
    fn new(h: &EnvelopeMatrix, dense: bool) -> Option<Self> {
        if dense {
            h.to_dense().cholesky().map(Factorization::Dense)
        } else {
            h.cholesky().map(Factorization::Envelope)
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(c) => c.solve(&DVector::from_column_slice(b)).as_slice().to_vec(),
            Factorization::Envelope(c) => c.solve(b),
        }
    }
}

fn retract(est: &Estimate, delta: &[f64], layout: &Layout) -> Estimate {
    let mut out = est.clone();
    for (i, p) in out.poses.iter_mut().enumerate() {
        let o = layout.pose(i);
        *p = Pose2::new(p.x + delta[o], p.y + delta[o + 1], wrap_angle(p.theta + delta[o + 2]));
    }
    for (s, l) in out.landmarks.iter_mut().enumerate() {
        let o = layout.landmark(s);
        l[0] += delta[o];
        l[1] += delta[o + 1];
    }
    out
}

/// Minimizes the whitened least-squares objective starting from `init`.
///
/// Never panics on degenerate systems: failed factorizations raise the
/// damping, and a problem that cannot be decreased further is returned with
/// `converged` reporting whether the gradient vanished.
pub fn optimize(graph: &FactorGraph, init: &Estimate, options: &SolverOptions) -> Estimate {
    let layout = Layout::new(graph);
    let dense = graph.num_variables() < options.dense_below;
    let mut est = init.clone();
    est.cost = cost(graph, &est);
    est.cost_trace = vec![est.cost];
    est.converged = false;
    est.iterations = 0;
    if layout.dim == 0 {
        est.converged = true;
        return est;
    }
    let mut lambda = options.initial_lambda;
    for iter in 0..options.max_iterations {
        est.iterations = iter + 1;
        if est.cost <= 1e-30 {
            est.converged = true;
            break;
        }
        let (h, g) = normal_equations(graph, &est, &layout);
        let grad_norm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if grad_norm <= 1e-12 * (1.0 + est.cost) {
            est.converged = true;
            break;
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut accepted = false;
        while lambda <= 1e12 {
            let mut damped = h.clone();
            for r in 0..layout.dim {
                let d = h.diagonal(r);
                damped.add_diagonal(r, lambda * d.max(1e-9));
            }
            let Some(fact) = Factorization::new(&damped, dense) else {
                lambda *= 10.0;
                continue;
            };
            let delta = fact.solve(&rhs);
            if delta.iter().any(|v| !v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let cand = retract(&est, &delta, &layout);
            let c = cost(graph, &cand);
            if c <= est.cost {
                let rel = (est.cost - c) / est.cost.max(1e-300);
                let step = delta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                est.poses = cand.poses;
                est.landmarks = cand.landmarks;
                est.cost = c;
                est.cost_trace.push(c);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < options.relative_tolerance || step < 1e-12 {
                    est.converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No decrease possible at any damping: at a minimum up to roundoff
            // if the gradient is small relative to the curvature.
            est.converged = grad_norm <= 1e-6 * (1.0 + est.cost);
            break;
        }
        if est.converged {
            break;
        }
    }
    est
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalCovariance {
    Pose(Matrix3<f64>),
    Landmark(Matrix2<f64>),
}

impl MarginalCovariance {
    pub fn trace(&self) -> f64 {
        match self {
            Self::Pose(m) => m.trace(),
            Self::Landmark(m) => m.trace(),
        }
    }

    /// (x, y) block.
    pub fn position_block(&self) -> Matrix2<f64> {
        match self {
            Self::Pose(m) => m.fixed_view::<2, 2>(0, 0).into_owned(),
            Self::Landmark(m) => *m,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Pose(m) => DMatrix::from_column_slice(3, 3, m.as_slice()),
            Self::Landmark(m) => DMatrix::from_column_slice(2, 2, m.as_slice()),
        }
    }
}

/// Factored information matrix at a fixed linearization point, queried for
/// per-variable marginal blocks.
pub struct Marginals<'a> {
    graph: &'a FactorGraph,
    layout: Layout,
    factorization: Factorization,
}

impl<'a> Marginals<'a> {
    pub fn new(graph: &'a FactorGraph, estimate: &Estimate) -> Result<Self> {
        Self::with_options(graph, estimate, &SolverOptions::default())
    }

    pub fn with_options(graph: &'a FactorGraph, estimate: &Estimate, options: &SolverOptions) -> Result<Self> {
        let layout = Layout::new(graph);
        let (h, _) = normal_equations(graph, estimate, &layout);
        let factorization = Factorization::new(&h, graph.num_variables() < options.dense_below)
            .ok_or_else(|| Error::Contract("information matrix is not positive definite".into()))?;
        Ok(Self { graph, layout, factorization })
    }

    pub fn covariance(&self, var: VarId) -> Result<MarginalCovariance> {
        let (offset, dim) = self.layout.var_offset(self.graph, var)?;
        let mut block = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; self.layout.dim];
        for c in 0..dim {
            e[offset + c] = 1.0;
            let col = self.factorization.solve(&e);
            e[offset + c] = 0.0;
            for r in 0..dim {
                block[(r, c)] = col[offset + r];
            }
        }
        let sym = (&block + block.transpose()) * 0.5;
        Ok(match dim {
            3 => MarginalCovariance::Pose(Matrix3::from_iterator(sym.iter().copied())),
            _ => MarginalCovariance::Landmark(Matrix2::from_iterator(sym.iter().copied())),
        })
    }
}

/// Marginal covariance of one variable at `estimate`.
pub fn marginal_covariance(graph: &FactorGraph, estimate: &Estimate, var: VarId) -> Result<MarginalCovariance> {
    Marginals::new(graph, estimate)?.covariance(var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slam::NoiseModel;
    use crate::world::{Measurement, MotionCommand, WorldConfig};

    #[test]
    fn prior_only_is_identity() {
        let sd = [0.1, 0.2, 0.05];
        let (g, est) = FactorGraph::with_prior(Pose2::new(1.0, -2.0, 0.3), sd);
        let out = optimize(&g, &est, &SolverOptions::default());
        assert_eq!(out.poses[0], Pose2::new(1.0, -2.0, 0.3));
        assert!(out.converged);
        let m = marginal_covariance(&g, &out, VarId::Pose(0)).unwrap();
        let expected = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.01, 0.04, 0.0025));
        match m {
            MarginalCovariance::Pose(p) => assert!((p - expected).norm() < 1e-15),
            _ => panic!("expected pose block"),
        }
    }

    #[test]
    fn noiseless_odometry_zero_residual() {
        let noise = NoiseModel::from_world(&WorldConfig::default());
        let (mut g, mut est) = FactorGraph::with_prior(Pose2::default(), noise.prior_sd);
        g.incorporate_step(&mut est, MotionCommand::new(0.0, 1.0), &vec![], &noise).unwrap();
        est.poses[1] = Pose2::new(0.7, 0.2, 0.1);
        let out = optimize(&g, &est, &SolverOptions::default());
        assert!(out.converged);
        assert!((out.poses[1].x - 1.0).abs() < 1e-9 && out.poses[1].y.abs() < 1e-9 && out.poses[1].theta.abs() < 1e-9);
        assert!(out.cost < 1e-15);
    }

    #[test]
    fn unknown_variable_lookup() {
        let (g, est) = FactorGraph::with_prior(Pose2::default(), [0.1; 3]);
        assert!(matches!(marginal_covariance(&g, &est, VarId::Pose(3)), Err(Error::UnknownVariable(_))));
        assert!(matches!(marginal_covariance(&g, &est, VarId::Landmark(0)), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn envelope_and_dense_paths_agree() {
        let noise = NoiseModel::from_world(&WorldConfig::default());
        let (mut g, mut est) = FactorGraph::with_prior(Pose2::default(), noise.prior_sd);
        for k in 0..40 {
            let scan: Vec<Measurement> = (0..3)
                .map(|id| Measurement { landmark_id: id, range: 3.0 + 0.01 * k as f64, bearing: 0.3 * id as f64 - 0.1 * k as f64 })
                .collect();
            g.incorporate_step(&mut est, MotionCommand::new(0.1, 0.5), &scan, &noise).unwrap();
        }
        assert!(g.num_variables() >= 40);
        let dense = SolverOptions { dense_below: usize::MAX, ..Default::default() };
        let sparse = SolverOptions { dense_below: 0, ..Default::default() };
        let a = optimize(&g, &est, &dense);
        let b = optimize(&g, &est, &sparse);
        for (p, q) in a.poses.iter().zip(&b.poses) {
            assert!((p.x - q.x).abs() < 1e-8 && (p.y - q.y).abs() < 1e-8);
        }
        let ma = Marginals::with_options(&g, &a, &dense).unwrap().covariance(VarId::Pose(40)).unwrap();
        let mb = Marginals::with_options(&g, &a, &sparse).unwrap().covariance(VarId::Pose(40)).unwrap();
        assert!((ma.to_dense() - mb.to_dense()).norm() < 1e-10 * ma.to_dense().norm());
    }
}
