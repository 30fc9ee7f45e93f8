//! Virtual landmarks: one 2×2 position covariance per map cell, measuring how
//! accurately that cell could be mapped given the robot's localization.
//! The summed A-optimality of all cells is the map utility.

use std::hash::{Hash, Hasher};
use std::io::Write;

use nalgebra::{Dim, Matrix, Matrix2, Matrix2x3, Matrix3, RawStorage};

use crate::geometry::{distance, Pose2};
use crate::slam::NoiseModel;
use crate::world::{plan_path, Bounds, WorldConfig};
use crate::{Error, Result};

/// A-optimality criterion: the trace of a covariance.
pub fn a_optimality<D: Dim, S: RawStorage<f64, D, D>>(cov: &Matrix<f64, D, D, S>) -> f64 {
    cov.trace()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub range: f64,
    pub range_sd: f64,
    pub bearing_sd: f64,
}

impl SensorModel {
    pub fn from_world(config: &WorldConfig) -> Self {
        Self { range: config.sensor_range, range_sd: config.range_noise_sd, bearing_sd: config.bearing_noise_sd }
    }

    /// Range-bearing noise mapped into world position at the given offset.
    pub fn position_noise(&self, offset: [f64; 2]) -> Matrix2<f64> {
        let r = offset[0].hypot(offset[1]);
        let a = offset[1].atan2(offset[0]);
        let (s, c) = a.sin_cos();
        let j = Matrix2::new(c, -r * s, s, r * c);
        let noise = Matrix2::new(self.range_sd * self.range_sd, 0.0, 0.0, self.bearing_sd * self.bearing_sd);
        j * noise * j.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualMap {
    origin: [f64; 2],
    cell_size: f64,
    nx: usize,
    ny: usize,
    covariances: Vec<Matrix2<f64>>,
    initial_variance: f64,
    sensor: SensorModel,
}

impl VirtualMap {
    pub fn new(bounds: Bounds, cell_size: f64, initial_variance: f64, sensor: SensorModel) -> Self {
        let nx = (bounds.width() / cell_size).ceil() as usize;
        let ny = (bounds.height() / cell_size).ceil() as usize;
        Self {
            origin: [bounds.min_x, bounds.min_y],
            cell_size,
            nx,
            ny,
            covariances: vec![Matrix2::identity() * initial_variance; nx * ny],
            initial_variance,
            sensor,
        }
    }

    pub fn for_world(config: &WorldConfig) -> Self {
        Self::new(
            config.bounds(),
            config.virtual_cell_size,
            config.virtual_initial_variance,
            SensorModel::from_world(config),
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.covariances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariances.is_empty()
    }

    pub fn initial_trace(&self) -> f64 {
        2.0 * self.initial_variance
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size,
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn covariance(&self, ix: usize, iy: usize) -> &Matrix2<f64> {
        &self.covariances[iy * self.nx + ix]
    }

    pub fn set_covariance(&mut self, ix: usize, iy: usize, cov: Matrix2<f64>) {
        self.covariances[iy * self.nx + ix] = cov;
    }

    /// Cell containing `p`, clamped to the grid edge for outside points.
    pub fn nearest_cell(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        if self.is_empty() {
            return None;
        }
        let fx = ((p[0] - self.origin[0]) / self.cell_size).floor().clamp(0.0, (self.nx - 1) as f64);
        let fy = ((p[1] - self.origin[1]) / self.cell_size).floor().clamp(0.0, (self.ny - 1) as f64);
        Some((fx as usize, fy as usize))
    }

    /// A-optimality of the virtual landmark at (or nearest to) `p`.
    pub fn trace_at(&self, p: [f64; 2]) -> f64 {
        self.nearest_cell(p).map_or(self.initial_trace(), |(ix, iy)| a_optimality(self.covariance(ix, iy)))
    }

    /// Sum of all cell A-optimality values.
    pub fn utility(&self) -> f64 {
        self.covariances.iter().map(a_optimality).sum()
    }

    /// Cells whose centers are within sensor range of `p`.
    pub fn cells_in_range(&self, p: [f64; 2]) -> Vec<(usize, usize)> {
        let range = self.sensor.range;
        let cs = self.cell_size;
        let lo_x = ((p[0] - range - self.origin[0]) / cs).floor().max(0.0) as usize;
        let lo_y = ((p[1] - range - self.origin[1]) / cs).floor().max(0.0) as usize;
        let hi_x = (((p[0] + range - self.origin[0]) / cs).ceil().max(0.0) as usize).min(self.nx);
        let hi_y = (((p[1] + range - self.origin[1]) / cs).ceil().max(0.0) as usize).min(self.ny);
        let mut out = Vec::new();
        for iy in lo_y..hi_y {
            for ix in lo_x..hi_x {
                if distance(self.cell_center(ix, iy), p) <= range {
                    out.push((ix, iy));
                }
            }
        }
        out
    }

    /// Fuses the observations made from each pose of a path. A cell seen
    /// from a pose is bounded below by that pose's position covariance plus
    /// the mapped sensor noise; the lower-trace of the old and candidate
    /// covariance is kept, so traces never increase.
    pub fn update(&mut self, poses: &[Pose2], pose_covariances: &[Matrix3<f64>]) -> Result<()> {
        if poses.len() != pose_covariances.len() {
            return Err(Error::Contract(format!(
                "{} poses but {} covariances",
                poses.len(),
                pose_covariances.len()
            )));
        }
        let before = if cfg!(debug_assertions) { self.utility() } else { 0.0 };
        for (pose, cov) in poses.iter().zip(pose_covariances) {
            let position = cov.fixed_view::<2, 2>(0, 0).into_owned();
            for (ix, iy) in self.cells_in_range(pose.position()) {
                let c = self.cell_center(ix, iy);
                let candidate = position + self.sensor.position_noise([c[0] - pose.x, c[1] - pose.y]);
                let candidate = (candidate + candidate.transpose()) * 0.5;
                let slot = &mut self.covariances[iy * self.nx + ix];
                if candidate.trace() < slot.trace() {
                    *slot = candidate;
                }
            }
        }
        debug_assert!(self.utility() <= before + 1e-9 * before.abs().max(1.0));
        Ok(())
    }

    /// Bitwise fingerprint of every covariance entry.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for c in &self.covariances {
            for v in c.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Plain-text matrix of per-cell traces, same layout as the occupancy
    /// export.
    pub fn write_traces<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# origin {} {}", self.origin[0], self.origin[1])?;
        writeln!(w, "# cell_size {}", self.cell_size)?;
        for iy in 0..self.ny {
            let row: Vec<String> = (0..self.nx).map(|ix| a_optimality(self.covariance(ix, iy)).to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Mapped landmark: current estimate and its position marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedLandmark {
    pub position: [f64; 2],
    pub covariance: Matrix2<f64>,
}

/// Robot pose estimate and its marginal covariance at decision time, with
/// the landmarks mapped so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub pose: Pose2,
    pub pose_covariance: Matrix3<f64>,
    pub landmarks: Vec<MappedLandmark>,
}

impl Belief {
    /// Belief with no mapped landmarks.
    pub fn new(pose: Pose2, pose_covariance: Matrix3<f64>) -> Self {
        Self { pose, pose_covariance, landmarks: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateOutcome {
    pub predicted_utility: f64,
    pub travel_cost: f64,
}

/// Predicted poses and covariances along the straight path to `goal`,
/// starting with the current pose. Odometry noise accumulates at every step;
/// the only correction is a range-bearing update from each mapped landmark
/// within sensor range of the predicted pose. Unmapped landmarks are never
/// assumed.
pub fn predict_path(
    belief: &Belief,
    goal: [f64; 2],
    config: &WorldConfig,
    noise: &NoiseModel,
) -> (Vec<Pose2>, Vec<Matrix3<f64>>) {
    let q = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        noise.odometry_sd[0].powi(2),
        noise.odometry_sd[1].powi(2),
        noise.odometry_sd[2].powi(2),
    ));
    let r = Matrix2::new(noise.measurement_sd[0].powi(2), 0.0, 0.0, noise.measurement_sd[1].powi(2));
    let mut pose = belief.pose;
    let mut cov = belief.pose_covariance;
    let mut poses = vec![pose];
    let mut covs = vec![cov];
    for cmd in plan_path(&pose, goal, config) {
        let next = pose.compose_motion(cmd.rotation, cmd.translation);
        let t = cmd.translation;
        let f = Matrix3::new(1.0, 0.0, -t * next.theta.sin(), 0.0, 1.0, t * next.theta.cos(), 0.0, 0.0, 1.0);
        cov = f * cov * f.transpose() + q;
        pose = next;
        for lm in &belief.landmarks {
            let (dx, dy) = (lm.position[0] - pose.x, lm.position[1] - pose.y);
            let q2 = dx * dx + dy * dy;
            if q2 > config.sensor_range * config.sensor_range || q2 < 1e-12 {
                continue;
            }
            let d = q2.sqrt();
            let h = Matrix2x3::new(-dx / d, -dy / d, 0.0, dy / q2, -dx / q2, -1.0);
            let hl = Matrix2::new(dx / d, dy / d, -dy / q2, dx / q2);
            let r_eff = r + hl * lm.covariance * hl.transpose();
            let Some(s_inv) = (h * cov * h.transpose() + r_eff).try_inverse() else { continue };
            let k = cov * h.transpose() * s_inv;
            let a = Matrix3::identity() - k * h;
            cov = a * cov * a.transpose() + k * r_eff * k.transpose();
        }
        cov = (cov + cov.transpose()) * 0.5;
        poses.push(pose);
        covs.push(cov);
    }
    (poses, covs)
}

/// Forward-simulates travel to `goal` on a private copy of the virtual map and
/// returns the copy's utility together with the path length. `vm` is only
/// read.
pub fn simulate_candidate(
    vm: &VirtualMap,
    belief: &Belief,
    goal: [f64; 2],
    config: &WorldConfig,
    noise: &NoiseModel,
) -> CandidateOutcome {
    let (poses, covs) = predict_path(belief, goal, config, noise);
    let mut copy = vm.clone();
    copy.update(&poses, &covs).expect("aligned path");
    CandidateOutcome { predicted_utility: copy.utility(), travel_cost: distance(belief.pose.position(), goal) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(size: f64) -> (VirtualMap, WorldConfig) {
        let cfg = WorldConfig::square(size);
        (VirtualMap::for_world(&cfg), cfg)
    }

    #[test]
    fn a_optimality_examples() {
        assert_eq!(a_optimality(&Matrix2::<f64>::identity()), 2.0);
        assert_eq!(a_optimality(&Matrix2::<f64>::zeros()), 0.0);
        assert!((a_optimality(&Matrix2::new(0.5, 0.1, 0.1, 0.3)) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn utility_examples() {
        let (mut vm, _) = fresh(40.0);
        assert_eq!(vm.len(), 400);
        assert_eq!(vm.utility(), 800.0);
        vm.set_covariance(3, 3, Matrix2::identity() * 0.5);
        assert_eq!(vm.utility(), 799.0);
        let empty = VirtualMap::new(Bounds::from_size(0.0, 0.0), 2.0, 1.0, SensorModel::from_world(&WorldConfig::default()));
        assert_eq!(empty.utility(), 0.0);
    }

    #[test]
    fn path_out_of_range_changes_nothing() {
        let (mut vm, _) = fresh(40.0);
        let before = vm.clone();
        vm.update(&[Pose2::new(-50.0, -50.0, 0.0)], &[Matrix3::identity() * 0.01]).unwrap();
        assert_eq!(vm, before);
        assert!(vm.update(&[Pose2::default()], &[]).is_err());
    }

    #[test]
    fn localized_pose_bound_at_one_meter() {
        let (mut vm, cfg) = fresh(40.0);
        // Cell (10, 10) has center (21, 21); pose one meter east of it.
        let pose = Pose2::new(20.0, 21.0, 0.0);
        vm.update(&[pose], &[Matrix3::zeros()]).unwrap();
        let t = vm.covariance(10, 10).trace();
        let bound = cfg.range_noise_sd.powi(2) + cfg.bearing_noise_sd.powi(2);
        assert!(t <= bound + 1e-15 && t < 2.0, "{t} vs {bound}");
    }

    #[test]
    fn idempotent_path_update() {
        let (mut vm, _) = fresh(20.0);
        let poses = [Pose2::new(5.0, 5.0, 0.0), Pose2::new(7.0, 5.0, 0.0)];
        let covs = [Matrix3::identity() * 0.02, Matrix3::identity() * 0.05];
        vm.update(&poses, &covs).unwrap();
        let once = vm.clone();
        vm.update(&poses, &covs).unwrap();
        assert_eq!(vm, once);
    }

    #[test]
    fn updated_cells_match_brute_force_disk() {
        let (mut vm, cfg) = fresh(40.0);
        let pose = Pose2::new(13.3, 22.7, 1.0);
        let before = vm.clone();
        vm.update(&[pose], &[Matrix3::identity() * 0.01]).unwrap();
        let (nx, ny) = vm.dims();
        for iy in 0..ny {
            for ix in 0..nx {
                let inside = distance(vm.cell_center(ix, iy), pose.position()) <= cfg.sensor_range;
                assert_eq!(vm.covariance(ix, iy) != before.covariance(ix, iy), inside);
            }
        }
    }

    fn belief_at(x: f64, y: f64) -> Belief {
        Belief::new(Pose2::new(x, y, 0.0), Matrix3::identity() * 1e-4)
    }

    #[test]
    fn candidate_simulation_isolated() {
        let (vm, cfg) = fresh(20.0);
        let noise = NoiseModel::from_world(&cfg);
        let fp = vm.fingerprint();
        let here = simulate_candidate(&vm, &belief_at(10.0, 10.0), [10.0, 10.0], &cfg, &noise);
        assert_eq!(here.travel_cost, 0.0);
        assert!(here.predicted_utility < vm.utility());
        assert_eq!(vm.fingerprint(), fp);
    }

    #[test]
    fn farther_candidate_costs_more_and_reduces_more() {
        // 10×10 cells of 2 m. Start in a corner whose disk is already fused.
        let (mut vm, cfg) = fresh(20.0);
        let noise = NoiseModel::from_world(&cfg);
        let b = belief_at(3.0, 3.0);
        vm.update(&[b.pose], &[b.pose_covariance]).unwrap();
        let near = simulate_candidate(&vm, &b, [7.0, 3.0], &cfg, &noise);
        let far = simulate_candidate(&vm, &b, [15.0, 15.0], &cfg, &noise);
        assert!(far.travel_cost > near.travel_cost);
        assert!(far.predicted_utility < near.predicted_utility);
        // Re-observing only fused cells from the same pose gains nothing.
        let stay = simulate_candidate(&vm, &b, [3.0, 3.0], &cfg, &noise);
        assert!((vm.utility() - stay.predicted_utility).abs() < 1e-12);
    }

    #[test]
    fn prediction_grows_without_mapped_landmarks() {
        let cfg = WorldConfig::default();
        let noise = NoiseModel::from_world(&cfg);
        let mut b = belief_at(0.0, 0.0);
        b.pose_covariance = Matrix3::identity() * 0.5;
        let (poses, covs) = predict_path(&b, [7.0, 3.0], &cfg, &noise);
        assert_eq!(poses.len(), covs.len());
        for w in covs.windows(2) {
            assert!(w[1].trace() > w[0].trace());
        }
    }

    #[test]
    fn mapped_landmark_in_range_tightens_prediction() {
        let cfg = WorldConfig::default();
        let noise = NoiseModel::from_world(&cfg);
        let mut b = belief_at(0.0, 0.0);
        b.pose_covariance = Matrix3::identity() * 0.5;
        let (_, bare) = predict_path(&b, [7.0, 0.0], &cfg, &noise);
        let far = MappedLandmark { position: [30.0, 30.0], covariance: Matrix2::identity() * 1e-3 };
        b.landmarks.push(far);
        let (_, out_of_range) = predict_path(&b, [7.0, 0.0], &cfg, &noise);
        assert_eq!(out_of_range, bare);
        b.landmarks.push(MappedLandmark { position: [4.0, 1.0], ..far });
        let (_, corrected) = predict_path(&b, [7.0, 0.0], &cfg, &noise);
        assert_eq!(corrected[0], bare[0]);
        for (c, u) in corrected.iter().zip(&bare).skip(1) {
            assert!(c.trace() < u.trace());
            assert!(c.symmetric_eigenvalues().min() > 0.0);
        }
    }
}
