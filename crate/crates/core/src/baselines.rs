//! Decision policies: nearest frontier, uniformly random frontier, the
//! forward-simulation (EM) policy, and a learned network.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::exploration_graph::ExplorationGraph;
use crate::gnn::{argmax, GraphBatch, PolicyParameters};
use crate::rl::Episode;
use crate::rng::StreamRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyKind {
    Nearest,
    Random,
    Em,
    Learned(PathBuf),
}

impl PolicyKind {
    /// Parses `nearest`, `random`, `em`, or `learned` with a checkpoint.
    pub fn parse(tag: &str, checkpoint: Option<&Path>) -> Result<Self> {
        match tag {
            "nearest" => Ok(PolicyKind::Nearest),
            "random" => Ok(PolicyKind::Random),
            "em" => Ok(PolicyKind::Em),
            "learned" => checkpoint
                .map(|p| PolicyKind::Learned(p.to_path_buf()))
                .ok_or_else(|| Error::Config("policy `learned` requires a checkpoint".into())),
            other => Err(Error::Config(format!("unknown policy `{other}` (expected nearest, random, em or learned)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Nearest => "nearest",
            PolicyKind::Random => "random",
            PolicyKind::Em => "em",
            PolicyKind::Learned(_) => "learned",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("learned", path)) => Ok(PolicyKind::Learned(PathBuf::from(path))),
            _ => PolicyKind::parse(s, None),
        }
    }
}

/// Frontier closest to the current pose; ties go to the lower index.
pub fn nearest_policy(graph: &ExplorationGraph) -> usize {
    graph.nearest_frontier()
}

/// Uniform choice among the frontiers.
pub fn random_policy<R: Rng + ?Sized>(graph: &ExplorationGraph, rng: &mut R) -> usize {
    rng.gen_range(0..graph.frontiers.len())
}

/// Frontier with the largest raw utility-minus-cost reward, and the time
/// spent deciding.
pub fn em_policy(episode: &Episode, alpha: f64) -> (usize, Duration) {
    let started = Instant::now();
    let choice = if episode.frontiers().len() == 1 { 0 } else { argmax(&episode.raw_rewards(alpha)) };
    (choice, started.elapsed())
}

/// A ready-to-run decision policy.
pub enum Policy {
    Nearest,
    Random(StreamRng),
    Em { alpha: f64 },
    Learned(Box<PolicyParameters>),
}

impl Policy {
    /// Instantiates `kind`; the random policy draws from `rng`.
    pub fn new(kind: &PolicyKind, alpha: f64, rng: StreamRng) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Nearest => Policy::Nearest,
            PolicyKind::Random => Policy::Random(rng),
            PolicyKind::Em => Policy::Em { alpha },
            PolicyKind::Learned(path) => Policy::Learned(Box::new(PolicyParameters::load(path)?)),
        })
    }

    pub fn learned(params: PolicyParameters) -> Self {
        Policy::Learned(Box::new(params))
    }

    /// Chooses a frontier index for the episode's current state.
    pub fn decide(&mut self, episode: &Episode) -> Result<usize> {
        if episode.frontiers().is_empty() {
            return Err(Error::Contract("no frontier to choose".into()));
        }
        match self {
            Policy::Nearest => episode.nearest_frontier(),
            Policy::Random(rng) => Ok(rng.gen_range(0..episode.frontiers().len())),
            Policy::Em { alpha } => Ok(em_policy(episode, *alpha).0),
            Policy::Learned(params) => {
                let graph = episode.graph().ok_or_else(|| Error::Contract("no exploration graph".into()))?;
                Ok(argmax(&params.scores(&GraphBatch::from_graph(&graph))?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration_graph::{Edge, Node, NodeKind};
    use crate::rng::{stream, Stream};

    fn graph(frontiers: &[[f64; 2]]) -> ExplorationGraph {
        let mut nodes = vec![Node { kind: NodeKind::Pose, position: [0.0, 0.0], feature: [2.0, 0.0, 0.0, 0.5, 0.0] }];
        for f in frontiers {
            nodes.push(Node { kind: NodeKind::Frontier, position: *f, feature: [2.0, 0.0, 0.0, 0.5, 1.0] });
        }
        ExplorationGraph {
            nodes,
            edges: vec![Edge { a: 0, b: 1, weight: 0.0 }],
            current: 0,
            frontiers: (1..=frontiers.len()).collect(),
        }
    }

    #[test]
    fn nearest_cases() {
        assert_eq!(nearest_policy(&graph(&[[3.0, 1.0]])), 0);
        assert_eq!(nearest_policy(&graph(&[[7.0, 0.0], [0.0, 2.0]])), 1);
        assert_eq!(nearest_policy(&graph(&[[0.0, 4.0], [4.0, 0.0], [-4.0, 0.0]])), 0);
    }

    #[test]
    fn random_is_uniform_and_reproducible() {
        let g = graph(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]);
        let mut rng = stream(4, Stream::Policy);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[random_policy(&g, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() < 0.02, "{counts:?}");
        }
        let a: Vec<usize> = (0..20).map(|_| random_policy(&g, &mut stream(9, Stream::Policy))).collect();
        let mut r = stream(9, Stream::Policy);
        let b: Vec<usize> = (0..20).map(|_| random_policy(&g, &mut r)).collect();
        assert!(a.iter().all(|&x| x == a[0]));
        let mut r2 = stream(9, Stream::Policy);
        assert_eq!(b, (0..20).map(|_| random_policy(&g, &mut r2)).collect::<Vec<_>>());
        assert_eq!(random_policy(&graph(&[[1.0, 1.0]]), &mut rng), 0);
    }

    #[test]
    fn policy_tags() {
        assert_eq!("em".parse::<PolicyKind>().unwrap(), PolicyKind::Em);
        assert!(PolicyKind::parse("learned", None).is_err());
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
