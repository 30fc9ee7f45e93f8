use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::geometry::{wrap_angle, Pose2};
use crate::world::{MotionCommand, SensorScan, WorldConfig};
use crate::{Error, Result};

/// Standard deviations for the three factor types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Per-step process noise on (x, y, θ).
    pub odometry_sd: [f64; 3],
    /// (range, bearing).
    pub measurement_sd: [f64; 2],
    pub prior_sd: [f64; 3],
    /// Returns closer than this are not added as factors: bearing is
    /// undefined at zero range and its Jacobian grows as 1/range.
    pub min_range: f64,
}

impl NoiseModel {
    /// Diagonal process noise from the motion noise magnitudes: translation
    /// noise on both position axes, rotation noise on heading.
    pub fn from_world(config: &WorldConfig) -> Self {
        let floor = 1e-6;
        Self {
            odometry_sd: [
                config.translation_noise_sd.max(floor),
                config.translation_noise_sd.max(floor),
                config.rotation_noise_sd.max(floor),
            ],
            measurement_sd: [config.range_noise_sd.max(floor), config.bearing_noise_sd.max(floor)],
            prior_sd: [1e-3, 1e-3, 1e-3],
            min_range: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    Pose(usize),
    /// External landmark id.
    Landmark(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Prior { pose: usize, mean: Pose2, sd: [f64; 3] },
    Odometry { from: usize, to: usize, command: MotionCommand, sd: [f64; 3] },
    /// `landmark` is the internal slot, see [`FactorGraph::landmark_slot`].
    Measurement { pose: usize, landmark: usize, range: f64, bearing: f64, sd: [f64; 2] },
}

/// Values for every variable plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Estimate {
    pub poses: Vec<Pose2>,
    /// Indexed by landmark slot.
    pub landmarks: Vec<[f64; 2]>,
    pub converged: bool,
    /// Final whitened squared residual norm.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_trace: Vec<f64>,
}

impl Estimate {
    pub fn current_pose(&self) -> Pose2 {
        *self.poses.last().expect("estimate has at least one pose")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorGraph {
    num_poses: usize,
    landmark_ids: Vec<usize>,
    slots: BTreeMap<usize, usize>,
    factors: Vec<Factor>,
}

impl FactorGraph {
    /// Graph with a single pose anchored by a prior. Returns the matching
    /// initial estimate.
    pub fn with_prior(mean: Pose2, sd: [f64; 3]) -> (Self, Estimate) {
        let graph = Self {
            num_poses: 1,
            factors: vec![Factor::Prior { pose: 0, mean, sd }],
            ..Default::default()
        };
        let est = Estimate { poses: vec![mean], converged: true, ..Default::default() };
        (graph, est)
    }

    pub fn num_poses(&self) -> usize {
        self.num_poses
    }

    pub fn num_landmarks(&self) -> usize {
        self.landmark_ids.len()
    }

    pub fn num_variables(&self) -> usize {
        self.num_poses + self.landmark_ids.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// External landmark ids in slot order.
    pub fn landmark_ids(&self) -> &[usize] {
        &self.landmark_ids
    }

    pub fn landmark_slot(&self, id: usize) -> Option<usize> {
        self.slots.get(&id).copied()
    }

    /// Distinct (pose, landmark slot) pairs joined by a measurement factor.
    pub fn measurement_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .factors
            .iter()
            .filter_map(|f| match *f {
                Factor::Measurement { pose, landmark, .. } => Some((pose, landmark)),
                _ => None,
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<()> {
        let check_pose = |p: usize| {
            if p < self.num_poses {
                Ok(())
            } else {
                Err(Error::UnknownVariable(format!("pose {p}")))
            }
        };
        match factor {
            Factor::Prior { pose, .. } => check_pose(pose)?,
            Factor::Odometry { from, to, .. } => {
                check_pose(from)?;
                check_pose(to)?;
            }
            Factor::Measurement { pose, landmark, .. } => {
                check_pose(pose)?;
                if landmark >= self.landmark_ids.len() {
                    return Err(Error::UnknownVariable(format!("landmark slot {landmark}")));
                }
            }
        }
        self.factors.push(factor);
        Ok(())
    }

    /// Adds one measurement factor per scan item at pose `pose`, skipping
    /// returns inside `min_range`. Landmarks seen for the first time get a new
    /// variable initialized by the inverse sensor model from the pose's
    /// current estimate.
    pub fn observe(
        &mut self,
        estimate: &mut Estimate,
        pose: usize,
        scan: &SensorScan,
        noise: &NoiseModel,
    ) -> Result<()> {
        if pose >= self.num_poses {
            return Err(Error::UnknownVariable(format!("pose {pose}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in scan {
            if !seen.insert(m.landmark_id) {
                return Err(Error::RejectedScan(format!("landmark {} appears twice", m.landmark_id)));
            }
            if !(m.range.is_finite() && m.range > 0.0 && m.bearing.is_finite()) {
                return Err(Error::RejectedScan(format!("invalid return for landmark {}", m.landmark_id)));
            }
        }
        let p = estimate.poses[pose];
        for m in scan.iter().filter(|m| m.range >= noise.min_range) {
            let slot = match self.slots.get(&m.landmark_id) {
                Some(&s) => s,
                None => {
                    let s = self.landmark_ids.len();
                    self.landmark_ids.push(m.landmark_id);
                    self.slots.insert(m.landmark_id, s);
                    let a = p.theta + m.bearing;
                    estimate.landmarks.push([p.x + m.range * a.cos(), p.y + m.range * a.sin()]);
                    s
                }
            };
            self.factors.push(Factor::Measurement {
                pose,
                landmark: slot,
                range: m.range,
                bearing: m.bearing,
                sd: noise.measurement_sd,
            });
        }
        Ok(())
    }

    /// Appends a pose reached by `odometry` from the latest pose, its
    /// odometry factor, and the scan taken there.
    pub fn incorporate_step(
        &mut self,
        estimate: &mut Estimate,
        odometry: MotionCommand,
        scan: &SensorScan,
        noise: &NoiseModel,
    ) -> Result<()> {
        if self.num_poses == 0 {
            return Err(Error::Contract("graph has no pose to extend".into()));
        }
        let from = self.num_poses - 1;
        let to = self.num_poses;
        self.num_poses += 1;
        let guess = estimate.poses[from].compose_motion(odometry.rotation, odometry.translation);
        estimate.poses.push(guess);
        self.factors.push(Factor::Odometry { from, to, command: odometry, sd: noise.odometry_sd });
        if let Err(e) = self.observe(estimate, to, scan, noise) {
            self.factors.pop();
            estimate.poses.pop();
            self.num_poses -= 1;
            return Err(e);
        }
        Ok(())
    }

    /// One factor per line:
    ///
    /// ```text
    /// prior <pose> <x> <y> <theta> <sd_x> <sd_y> <sd_theta>
    /// odometry <from> <to> <rotation> <translation> <sd_x> <sd_y> <sd_theta>
    /// measurement <pose> <landmark_id> <range> <bearing> <sd_range> <sd_bearing>
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for f in &self.factors {
            match f {
                Factor::Prior { pose, mean, sd } => writeln!(
                    out,
                    "prior {pose} {} {} {} {} {} {}",
                    mean.x, mean.y, mean.theta, sd[0], sd[1], sd[2]
                ),
                Factor::Odometry { from, to, command, sd } => writeln!(
                    out,
                    "odometry {from} {to} {} {} {} {} {}",
                    command.rotation, command.translation, sd[0], sd[1], sd[2]
                ),
                Factor::Measurement { pose, landmark, range, bearing, sd } => writeln!(
                    out,
                    "measurement {pose} {} {range} {bearing} {} {}",
                    self.landmark_ids[*landmark], sd[0], sd[1]
                ),
            }
            .expect("write to string");
        }
        out
    }

    /// Parses [`FactorGraph::dump`] output. Landmark slots are assigned in
    /// order of first appearance.
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut g = FactorGraph::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: lineno + 1, msg: msg.to_string() };
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                tok.get(i).ok_or_else(|| err("missing field"))?.parse::<f64>().map_err(|_| err("bad number"))
            };
            let idx = |i: usize| -> Result<usize> {
                tok.get(i).ok_or_else(|| err("missing field"))?.parse::<usize>().map_err(|_| err("bad index"))
            };
            if tok.len() != 8 && !(tok[0] == "measurement" && tok.len() == 7) {
                return Err(err("wrong field count"));
            }
            match tok[0] {
                "prior" => {
                    let pose = idx(1)?;
                    g.num_poses = g.num_poses.max(pose + 1);
                    g.factors.push(Factor::Prior {
                        pose,
                        mean: Pose2::new(num(2)?, num(3)?, num(4)?),
                        sd: [num(5)?, num(6)?, num(7)?],
                    });
                }
                "odometry" => {
                    let (from, to) = (idx(1)?, idx(2)?);
                    g.num_poses = g.num_poses.max(from.max(to) + 1);
                    g.factors.push(Factor::Odometry {
                        from,
                        to,
                        command: MotionCommand::new(num(3)?, num(4)?),
                        sd: [num(5)?, num(6)?, num(7)?],
                    });
                }
                "measurement" => {
                    let pose = idx(1)?;
                    let id = idx(2)?;
                    g.num_poses = g.num_poses.max(pose + 1);
                    let slot = match g.slots.get(&id) {
                        Some(&s) => s,
                        None => {
                            g.landmark_ids.push(id);
                            g.slots.insert(id, g.landmark_ids.len() - 1);
                            g.landmark_ids.len() - 1
                        }
                    };
                    g.factors.push(Factor::Measurement {
                        pose,
                        landmark: slot,
                        range: num(3)?,
                        bearing: num(4)?,
                        sd: [num(5)?, num(6)?],
                    });
                }
                _ => return Err(err("unknown factor type")),
            }
        }
        Ok(g)
    }
}

/// Whitened residual `z - g(x)` of a range-bearing factor.
pub(crate) fn measurement_residual(pose: &Pose2, lm: [f64; 2], range: f64, bearing: f64) -> [f64; 2] {
    let dx = lm[0] - pose.x;
    let dy = lm[1] - pose.y;
    [range - dx.hypot(dy), wrap_angle(bearing - (dy.atan2(dx) - pose.theta))]
}

pub(crate) fn odometry_residual(from: &Pose2, to: &Pose2, cmd: &MotionCommand) -> [f64; 3] {
    let h = from.compose_motion(cmd.rotation, cmd.translation);
    [to.x - h.x, to.y - h.y, wrap_angle(to.theta - h.theta)]
}

pub(crate) fn prior_residual(pose: &Pose2, mean: &Pose2) -> [f64; 3] {
    [pose.x - mean.x, pose.y - mean.y, wrap_angle(pose.theta - mean.theta)]
}
