//! Pose-landmark factor graph smoothing.
//!
//! Poses are SE(2), landmarks are points in the plane. The least-squares
//! problem over prior, odometry and range-bearing factors is solved by
//! Levenberg-Marquardt-damped Gauss-Newton with full relinearization, and
//! marginal covariances are read from the inverse information matrix.

mod envelope;
mod graph;
mod solver;

pub use envelope::{EnvelopeCholesky, EnvelopeMatrix};
pub use graph::{Estimate, Factor, FactorGraph, NoiseModel, VarId};
pub use solver::{marginal_covariance, optimize, MarginalCovariance, Marginals, SolverOptions};
