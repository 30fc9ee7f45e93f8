use std::f64::consts::PI;

use rand::Rng;

use super::WorldConfig;
use crate::geometry::{wrap_angle, Pose2};
use crate::rng::{self, truncated_gaussian, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

impl Landmark {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub robot_pose: Pose2,
    pub landmarks: Vec<Landmark>,
}

/// One range-bearing return. Bearing is relative to the robot heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub landmark_id: usize,
    pub range: f64,
    pub bearing: f64,
}

pub type SensorScan = Vec<Measurement>;

/// Rotate, then translate along the new heading.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionCommand {
    pub rotation: f64,
    pub translation: f64,
}

impl MotionCommand {
    pub const fn new(rotation: f64, translation: f64) -> Self {
        Self { rotation, translation }
    }

    /// Clamps into `[-π, π] × [0, translation_max]`. The flag reports whether
    /// anything was changed.
    pub fn clamped(self, translation_max: f64) -> (Self, bool) {
        let rotation = self.rotation.clamp(-PI, PI);
        let translation = self.translation.clamp(0.0, translation_max);
        let changed = rotation != self.rotation || translation != self.translation;
        (Self { rotation, translation }, changed)
    }
}

/// Samples landmarks and a start pose. The landmark count is
/// `round(width · height · density)`; everything is uniform in the bounds.
pub fn generate_world(config: &WorldConfig) -> Result<GroundTruth> {
    if !(config.width > 0.0 && config.height > 0.0) {
        return Err(Error::Config(format!(
            "world must have positive area, got {}×{}",
            config.width, config.height
        )));
    }
    config.validate()?;
    let mut rng = rng::stream(config.seed, Stream::World);
    let count = (config.width * config.height * config.landmark_density).round() as usize;
    let landmarks = (0..count)
        .map(|id| Landmark {
            id,
            x: rng.gen_range(0.0..=config.width),
            y: rng.gen_range(0.0..=config.height),
        })
        .collect();
    let x = rng.gen_range(0.0..=config.width);
    let y = rng.gen_range(0.0..=config.height);
    // (-π, π]
    let theta = PI - rng.gen_range(0.0..2.0 * PI);
    Ok(GroundTruth { robot_pose: Pose2::new(x, y, theta), landmarks })
}

/// Applies a motion command with rotation noise, then translation noise along
/// the new heading. Returns the new true pose; the odometry report is the
/// commanded value itself.
pub fn step_motion<R: Rng + ?Sized>(
    pose: &Pose2,
    cmd: MotionCommand,
    config: &WorldConfig,
    rng: &mut R,
) -> Pose2 {
    let rotation = cmd.rotation + truncated_gaussian(rng, config.rotation_noise_sd);
    let translation = cmd.translation + truncated_gaussian(rng, config.translation_noise_sd);
    pose.compose_motion(rotation, translation)
}

/// Every landmark within `sensor_range` of the true pose (and inside the
/// field of view) yields a noisy range and bearing.
pub fn sense<R: Rng + ?Sized>(truth: &GroundTruth, config: &WorldConfig, rng: &mut R) -> SensorScan {
    let pose = truth.robot_pose;
    let mut scan = Vec::new();
    for lm in &truth.landmarks {
        let dx = lm.x - pose.x;
        let dy = lm.y - pose.y;
        let range = dx.hypot(dy);
        if range > config.sensor_range {
            continue;
        }
        let bearing = wrap_angle(dy.atan2(dx) - pose.theta);
        if config.fov < 2.0 * PI && bearing.abs() > config.fov / 2.0 {
            continue;
        }
        let noisy_range = (range + truncated_gaussian(rng, config.range_noise_sd))
            .clamp(f64::MIN_POSITIVE, config.sensor_range);
        let noisy_bearing = wrap_angle(bearing + truncated_gaussian(rng, config.bearing_noise_sd));
        scan.push(Measurement { landmark_id: lm.id, range: noisy_range, bearing: noisy_bearing });
    }
    scan
}

/// Turn toward the goal, then drive straight in steps of at most
/// `translation_max`. The turn is folded into the first command.
pub fn plan_path(from: &Pose2, to: [f64; 2], config: &WorldConfig) -> Vec<MotionCommand> {
    let dx = to[0] - from.x;
    let dy = to[1] - from.y;
    let dist = dx.hypot(dy);
    if dist < 1e-9 {
        return Vec::new();
    }
    let rotation = wrap_angle(dy.atan2(dx) - from.theta);
    let steps = (dist / config.translation_max).ceil() as usize;
    let mut remaining = dist;
    let mut cmds = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = if i + 1 == steps { remaining } else { config.translation_max.min(remaining) };
        remaining -= t;
        cmds.push(MotionCommand::new(if i == 0 { rotation } else { 0.0 }, t));
    }
    cmds
}
