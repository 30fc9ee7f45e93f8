//! Active-SLAM exploration benchmark.
//!
//! A range-bearing robot explores a random landmark world. Its belief is a
//! pose/landmark factor graph smoothed by Gauss-Newton, map uncertainty is
//! tracked by a grid of virtual landmarks, and the decision state is an
//! exploration graph of poses, landmarks and frontier candidates. Graph
//! neural network policies (GCN, gated GNN) choose the next frontier and are
//! trained with DQN or A2C against nearest, random and forward-simulation
//! baselines.

pub mod baselines;
pub mod error;
pub mod exploration_graph;
pub mod geometry;
pub mod gnn;
pub mod harness;
pub mod par;
pub mod rl;
pub mod rng;
pub mod slam;
pub mod virtual_map;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{wrap_angle, Pose2};
