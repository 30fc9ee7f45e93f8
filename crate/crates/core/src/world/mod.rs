//! Random landmark worlds, noisy motion and range-bearing sensing, the
//! occupancy grid and frontier detection.

mod config;
mod occupancy;
mod sim;

pub use config::WorldConfig;
pub use occupancy::{coverage_fraction, detect_frontiers, Frontier, FrontierSet, OccupancyGrid};
pub use sim::{
    generate_world, plan_path, sense, step_motion, GroundTruth, Landmark, Measurement,
    MotionCommand, SensorScan,
};

/// Axis-aligned world rectangle `[min_x, max_x] × [min_y, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn from_size(width: f64, height: f64) -> Self {
        Self { min_x: 0.0, min_y: 0.0, max_x: width, max_y: height }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min_x && p[0] <= self.max_x && p[1] >= self.min_y && p[1] <= self.max_y
    }
}
