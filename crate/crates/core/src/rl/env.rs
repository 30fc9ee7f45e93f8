use nalgebra::{Matrix2, Matrix3};

use crate::exploration_graph::{build_graph, nearest_frontier, ExplorationGraph, GraphOptions};
use crate::geometry::Pose2;
use crate::rng::{self, Stream, StreamRng};
use crate::slam::{optimize, Estimate, FactorGraph, MarginalCovariance, Marginals, NoiseModel, SolverOptions, VarId};
use super::reward::candidate_raw_reward;
use crate::virtual_map::{Belief, MappedLandmark, VirtualMap};
use crate::world::{
    coverage_fraction, detect_frontiers, generate_world, plan_path, sense, step_motion, FrontierSet, GroundTruth,
    OccupancyGrid, SensorScan, WorldConfig,
};
use crate::{Error, Result};

/// Metric snapshot taken after every motion step (and once at the start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub decision: usize,
    pub motion_step: usize,
    /// Mean marginal trace over mapped landmarks; NaN before any is mapped.
    pub avg_landmark_uncertainty: f64,
    /// Running maximum of the current pose's position-marginal trace.
    pub max_trajectory_uncertainty: f64,
    pub map_entropy: f64,
    pub coverage: f64,
    pub distance: f64,
}

/// One exploration episode: ground truth, SLAM belief, occupancy grid,
/// virtual map and frontiers, advanced one decision at a time.
#[derive(Debug, Clone)]
pub struct Episode {
    pub config: WorldConfig,
    pub noise: NoiseModel,
    pub solver: SolverOptions,
    pub graph_options: GraphOptions,
    truth: GroundTruth,
    slam: FactorGraph,
    estimate: Estimate,
    grid: OccupancyGrid,
    vm: VirtualMap,
    frontiers: FrontierSet,
    pose_covariance: Matrix3<f64>,
    landmark_beliefs: Vec<([f64; 2], Matrix2<f64>)>,
    motion_rng: StreamRng,
    sensor_rng: StreamRng,
    decisions: usize,
    motion_steps: usize,
    distance: f64,
    slam_failures: usize,
    max_pose_trace: f64,
    /// State before the first scan was absorbed.
    initial: Option<StepRecord>,
    records: Option<Vec<StepRecord>>,
}

impl Episode {
    /// Fresh episode in the world generated from `config.seed`.
    pub fn new(config: &WorldConfig) -> Result<Self> {
        let truth = generate_world(config)?;
        let noise = NoiseModel::from_world(config);
        let (mut slam, mut estimate) = FactorGraph::with_prior(truth.robot_pose, noise.prior_sd);
        let mut sensor_rng = rng::stream(config.seed, Stream::Sensor);
        let scan = sense(&truth, config, &mut sensor_rng);
        slam.observe(&mut estimate, 0, &scan, &noise)?;
        let mut ep = Self {
            config: config.clone(),
            noise,
            solver: SolverOptions::default(),
            graph_options: GraphOptions::default(),
            truth,
            slam,
            estimate,
            grid: OccupancyGrid::for_world(config),
            vm: VirtualMap::for_world(config),
            frontiers: Vec::new(),
            pose_covariance: Matrix3::zeros(),
            landmark_beliefs: Vec::new(),
            motion_rng: rng::stream(config.seed, Stream::Motion),
            sensor_rng,
            decisions: 0,
            motion_steps: 0,
            distance: 0.0,
            slam_failures: 0,
            max_pose_trace: 0.0,
            initial: None,
            records: None,
        };
        ep.initial = Some(ep.snapshot());
        ep.absorb(&scan)?;
        ep.refresh_landmarks()?;
        ep.frontiers = detect_frontiers(&ep.grid, &ep.config);
        Ok(ep)
    }

    /// Starts recording a [`StepRecord`] per motion step. Enabled before the
    /// first motion, the step-0 record is the prior state with no scan
    /// absorbed, so its map entropy equals the cell count.
    pub fn enable_records(&mut self) {
        let first = match self.initial {
            Some(r) if self.motion_steps == 0 => r,
            _ => self.snapshot(),
        };
        self.records = Some(vec![first]);
    }

    pub fn records(&self) -> &[StepRecord] {
        self.records.as_deref().unwrap_or(&[])
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn slam(&self) -> &FactorGraph {
        &self.slam
    }

    pub fn estimate(&self) -> &Estimate {
        &self.estimate
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn virtual_map(&self) -> &VirtualMap {
        &self.vm
    }

    pub fn frontiers(&self) -> &FrontierSet {
        &self.frontiers
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn motion_steps(&self) -> usize {
        self.motion_steps
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn slam_failures(&self) -> usize {
        self.slam_failures
    }

    pub fn current_pose(&self) -> Pose2 {
        self.estimate.current_pose()
    }

    pub fn coverage(&self) -> f64 {
        coverage_fraction(&self.grid, &self.config.bounds())
    }

    /// Coverage target reached or nothing left to explore.
    pub fn is_done(&self) -> bool {
        self.coverage() >= self.config.coverage_target || self.frontiers.is_empty()
    }

    pub fn belief(&self) -> Belief {
        Belief {
            pose: self.current_pose(),
            pose_covariance: self.pose_covariance,
            landmarks: self.landmark_beliefs.iter().map(|&(position, covariance)| MappedLandmark { position, covariance }).collect(),
        }
    }

    pub fn graph(&self) -> Option<ExplorationGraph> {
        build_graph(&self.estimate, &self.slam, &self.frontiers, &self.vm, &self.grid, &self.graph_options)
    }

    /// Index of the frontier closest to the current pose estimate.
    pub fn nearest_frontier(&self) -> Result<usize> {
        let positions: Vec<[f64; 2]> = self.frontiers.iter().map(|f| f.position()).collect();
        nearest_frontier(self.current_pose().position(), &positions)
    }

    /// Utility now minus predicted utility after visiting `frontier`, minus
    /// `alpha` times the path length.
    pub fn raw_reward(&self, frontier: usize, alpha: f64) -> Result<f64> {
        let f = self
            .frontiers
            .get(frontier)
            .ok_or_else(|| Error::Contract(format!("frontier {frontier} out of range")))?;
        Ok(candidate_raw_reward(&self.vm, &self.belief(), f.position(), &self.config, &self.noise, alpha))
    }

    /// Raw rewards of every frontier, evaluated concurrently.
    pub fn raw_rewards(&self, alpha: f64) -> Vec<f64> {
        let belief = self.belief();
        crate::par::map(&self.frontiers, |f| {
            candidate_raw_reward(&self.vm, &belief, f.position(), &self.config, &self.noise, alpha)
        })
    }

    /// Drives to `frontier` along the planned path, updating every estimate
    /// after each motion step.
    pub fn execute(&mut self, frontier: usize) -> Result<()> {
        let goal = self
            .frontiers
            .get(frontier)
            .ok_or_else(|| Error::Contract(format!("frontier {frontier} out of range")))?
            .position();
        let commands = plan_path(&self.current_pose(), goal, &self.config);
        for cmd in commands {
            self.truth.robot_pose = step_motion(&self.truth.robot_pose, cmd, &self.config, &mut self.motion_rng);
            let scan = sense(&self.truth, &self.config, &mut self.sensor_rng);
            self.slam.incorporate_step(&mut self.estimate, cmd, &scan, &self.noise)?;
            self.motion_steps += 1;
            self.distance += cmd.translation;
            self.absorb(&scan)?;
            if self.records.is_some() {
                self.refresh_landmarks()?;
                let snap = self.snapshot();
                self.records.as_mut().unwrap().push(snap);
            }
        }
        self.decisions += 1;
        if self.records.is_none() {
            self.refresh_landmarks()?;
        }
        self.frontiers = detect_frontiers(&self.grid, &self.config);
        Ok(())
    }

    /// Re-optimizes, then folds the scan and the current pose marginal into
    /// the grid and the virtual map.
    fn absorb(&mut self, scan: &SensorScan) -> Result<()> {
        let solved = optimize(&self.slam, &self.estimate, &self.solver);
        if !solved.converged {
            self.slam_failures += 1;
        }
        if solved.poses.iter().all(Pose2::is_finite) && solved.landmarks.iter().flatten().all(|v| v.is_finite()) {
            self.estimate = solved;
        }
        let marginals = Marginals::with_options(&self.slam, &self.estimate, &self.solver)?;
        let current = self.slam.num_poses() - 1;
        self.pose_covariance = match marginals.covariance(VarId::Pose(current))? {
            MarginalCovariance::Pose(c) => c,
            MarginalCovariance::Landmark(_) => unreachable!("pose variable"),
        };
        let trace = self.pose_covariance[(0, 0)] + self.pose_covariance[(1, 1)];
        self.max_pose_trace = self.max_pose_trace.max(trace);
        let pose = self.current_pose();
        self.grid.update(&pose, scan, &self.config);
        self.vm.update(&[pose], &[self.pose_covariance])?;
        Ok(())
    }

    fn refresh_landmarks(&mut self) -> Result<()> {
        if self.slam.num_landmarks() == 0 {
            self.landmark_beliefs.clear();
            return Ok(());
        }
        let marginals = Marginals::with_options(&self.slam, &self.estimate, &self.solver)?;
        let mut beliefs = Vec::with_capacity(self.slam.num_landmarks());
        for (slot, &id) in self.slam.landmark_ids().iter().enumerate() {
            let cov = marginals.covariance(VarId::Landmark(id))?.position_block();
            beliefs.push((self.estimate.landmarks[slot], cov));
        }
        self.landmark_beliefs = beliefs;
        Ok(())
    }

    fn snapshot(&self) -> StepRecord {
        let n = self.landmark_beliefs.len();
        let avg = if n == 0 {
            f64::NAN
        } else {
            self.landmark_beliefs.iter().map(|(_, c)| c.trace()).sum::<f64>() / n as f64
        };
        StepRecord {
            decision: self.decisions,
            motion_step: self.motion_steps,
            avg_landmark_uncertainty: avg,
            max_trajectory_uncertainty: self.max_pose_trace,
            map_entropy: self.grid.entropy_bits(),
            coverage: self.coverage(),
            distance: self.distance,
        }
    }
}
