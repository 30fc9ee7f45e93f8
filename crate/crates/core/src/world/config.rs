use std::f64::consts::TAU;

use super::Bounds;
use crate::{Error, Result};

/// Simulation parameters. Lengths in meters, angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    /// Landmarks per square meter.
    pub landmark_density: f64,
    pub sensor_range: f64,
    pub range_noise_sd: f64,
    pub bearing_noise_sd: f64,
    pub fov: f64,
    pub translation_max: f64,
    pub translation_noise_sd: f64,
    pub rotation_noise_sd: f64,
    /// Occupancy grid resolution.
    pub cell_size: f64,
    /// Virtual map resolution.
    pub virtual_cell_size: f64,
    /// Initial per-axis variance of every virtual landmark (m²).
    pub virtual_initial_variance: f64,
    pub coverage_target: f64,
    /// Smallest frontier cluster kept, in cells.
    pub min_cluster_cells: usize,
    /// Clusters larger than this are split into several candidates.
    pub max_frontier_cells: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 40.0,
            height: 40.0,
            landmark_density: 0.005,
            sensor_range: 5.0,
            range_noise_sd: 0.02,
            bearing_noise_sd: 0.5_f64.to_radians(),
            fov: TAU,
            translation_max: 2.0,
            translation_noise_sd: 0.1,
            rotation_noise_sd: 0.2_f64.to_radians(),
            cell_size: 1.0,
            virtual_cell_size: 2.0,
            virtual_initial_variance: 1.0,
            coverage_target: 0.85,
            min_cluster_cells: 2,
            max_frontier_cells: 12,
            seed: 0,
        }
    }
}

impl WorldConfig {
    /// Square world of side `size` with every other parameter at its default.
    pub fn square(size: f64) -> Self {
        Self { width: size, height: size, ..Self::default() }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::from_size(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("width", self.width),
            ("height", self.height),
            ("sensor_range", self.sensor_range),
            ("translation_max", self.translation_max),
            ("cell_size", self.cell_size),
            ("virtual_cell_size", self.virtual_cell_size),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("world.{name} must be a positive length, got {v}")));
            }
        }
        let sds = [
            ("range_noise_sd", self.range_noise_sd),
            ("bearing_noise_sd", self.bearing_noise_sd),
            ("translation_noise_sd", self.translation_noise_sd),
            ("rotation_noise_sd", self.rotation_noise_sd),
            ("landmark_density", self.landmark_density),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("world.{name} must be non-negative, got {v}")));
            }
        }
        if !(self.coverage_target > 0.0 && self.coverage_target <= 1.0) {
            return Err(Error::Config(format!(
                "world.coverage_target must lie in (0, 1], got {}",
                self.coverage_target
            )));
        }
        if !(self.fov > 0.0 && self.fov <= TAU) {
            return Err(Error::Config(format!("world.fov must lie in (0, 2π], got {}", self.fov)));
        }
        if !(self.virtual_initial_variance > 0.0) {
            return Err(Error::Config("world.virtual_initial_variance must be positive".into()));
        }
        if self.max_frontier_cells == 0 {
            return Err(Error::Config("world.max_frontier_cells must be at least 1".into()));
        }
        Ok(())
    }
}
