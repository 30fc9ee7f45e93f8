//! Exploration graph: the decision state handed to the policies.
//!
//! Nodes are every pose of the trajectory, every mapped landmark and every
//! frontier candidate. Edges join consecutive poses, poses to the landmarks
//! they measured, each landmark to its nearest frontier, and the current pose
//! to its nearest frontier. Edge weights are Euclidean distances.

use std::fmt::Write as _;

use crate::geometry::distance;
use crate::slam::{Estimate, FactorGraph};
use crate::virtual_map::VirtualMap;
use crate::world::{Frontier, OccupancyGrid};
use crate::{Error, Result};

pub const FEATURE_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Pose,
    Landmark,
    Frontier,
}

impl NodeKind {
    fn tag(self) -> &'static str {
        match self {
            NodeKind::Pose => "pose",
            NodeKind::Landmark => "landmark",
            NodeKind::Frontier => "frontier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub position: [f64; 2],
    /// [uncertainty, distance, relative bearing, occupancy, indicator]
    pub feature: [f64; FEATURE_DIM],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub current: usize,
    /// Node indices of the frontier candidates, in action order.
    pub frontiers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GraphOptions {
    /// Thin the pose history when the graph would exceed this many nodes.
    pub max_nodes: Option<usize>,
}

/// Index of the frontier closest to `query`; ties go to the lower index.
pub fn nearest_frontier(query: [f64; 2], frontiers: &[[f64; 2]]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in frontiers.iter().enumerate() {
        let d = distance(query, *f);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::Contract("nearest frontier of an empty set".into()))
}

fn features(position: [f64; 2], current: [f64; 2], indicator: f64, vm: &VirtualMap, grid: &OccupancyGrid) -> [f64; 5] {
    let dx = position[0] - current[0];
    let dy = position[1] - current[1];
    [vm.trace_at(position), dx.hypot(dy), dy.atan2(dx), grid.probability_at(position), indicator]
}

/// Builds the graph for the current belief. Returns `None` when there are no
/// frontiers, which ends the episode.
pub fn build_graph(
    estimate: &Estimate,
    slam: &FactorGraph,
    frontiers: &[Frontier],
    vm: &VirtualMap,
    grid: &OccupancyGrid,
    options: &GraphOptions,
) -> Option<ExplorationGraph> {
    if frontiers.is_empty() || estimate.poses.is_empty() {
        return None;
    }
    let n_poses = estimate.poses.len();
    let n_lm = estimate.landmarks.len();
    let full = n_poses + n_lm + frontiers.len();
    let stride = match options.max_nodes {
        Some(max) if full > max && max > n_lm + frontiers.len() + 1 => {
            let budget = max - n_lm - frontiers.len();
            (n_poses - 1).div_ceil(budget.saturating_sub(1).max(1))
        }
        Some(max) if full > max => n_poses,
        _ => 1,
    };
    // Kept pose indices, always ending with the current pose.
    let mut kept: Vec<usize> = (0..n_poses - 1).step_by(stride.max(1)).collect();
    kept.push(n_poses - 1);
    let pose_node = |i: usize| -> usize {
        if stride <= 1 {
            i
        } else {
            kept.partition_point(|&k| k <= i) - 1
        }
    };

    let current_pos = estimate.current_pose().position();
    let mut nodes = Vec::with_capacity(kept.len() + n_lm + frontiers.len());
    for (k, &i) in kept.iter().enumerate() {
        let p = estimate.poses[i].position();
        let indicator = if k + 1 == kept.len() { 0.0 } else { -1.0 };
        nodes.push(Node { kind: NodeKind::Pose, position: p, feature: features(p, current_pos, indicator, vm, grid) });
    }
    let current = kept.len() - 1;
    let lm_base = nodes.len();
    for l in &estimate.landmarks {
        nodes.push(Node { kind: NodeKind::Landmark, position: *l, feature: features(*l, current_pos, -1.0, vm, grid) });
    }
    let fr_base = nodes.len();
    for f in frontiers {
        let p = f.position();
        nodes.push(Node { kind: NodeKind::Frontier, position: p, feature: features(p, current_pos, 1.0, vm, grid) });
    }
    // The current-pose features are exact by definition.
    nodes[current].feature[1] = 0.0;
    nodes[current].feature[2] = 0.0;

    let mut edges = Vec::new();
    let mut push = |a: usize, b: usize, nodes: &[Node]| {
        edges.push(Edge { a, b, weight: distance(nodes[a].position, nodes[b].position) });
    };
    for k in 1..kept.len() {
        push(k - 1, k, &nodes);
    }
    let mut pairs: Vec<(usize, usize)> =
        slam.measurement_pairs().into_iter().map(|(p, l)| (pose_node(p), lm_base + l)).collect();
    pairs.dedup();
    for (a, b) in pairs {
        push(a, b, &nodes);
    }
    let positions: Vec<[f64; 2]> = frontiers.iter().map(Frontier::position).collect();
    for l in 0..n_lm {
        let f = nearest_frontier(estimate.landmarks[l], &positions).expect("non-empty");
        push(lm_base + l, fr_base + f, &nodes);
    }
    let f = nearest_frontier(current_pos, &positions).expect("non-empty");
    push(current, fr_base + f, &nodes);

    let graph = ExplorationGraph { nodes, edges, current, frontiers: (fr_base..fr_base + frontiers.len()).collect() };
    debug_assert!(graph.validate().is_ok(), "{:?}", graph.validate());
    Some(graph)
}

impl ExplorationGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn frontier_positions(&self) -> Vec<[f64; 2]> {
        self.frontiers.iter().map(|&i| self.nodes[i].position).collect()
    }

    pub fn current_position(&self) -> [f64; 2] {
        self.nodes[self.current].position
    }

    /// Ordinal (into `frontiers`) of the frontier closest to the current pose.
    pub fn nearest_frontier(&self) -> usize {
        nearest_frontier(self.current_position(), &self.frontier_positions()).expect("graph has frontiers")
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        let zeros = self.nodes.iter().filter(|n| n.feature[4] == 0.0).count();
        if zeros != 1 || self.nodes[self.current].feature[4] != 0.0 {
            return bad(format!("expected exactly one current-pose node, found {zeros}"));
        }
        if self.frontiers.is_empty() {
            return bad("no frontier nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let is_frontier = n.kind == NodeKind::Frontier;
            if (n.feature[4] == 1.0) != is_frontier {
                return bad(format!("node {i}: frontier indicator mismatch"));
            }
            if !(n.feature[3] > 0.0 && n.feature[3] < 1.0) {
                return bad(format!("node {i}: occupancy {} outside (0,1)", n.feature[3]));
            }
            if n.feature.iter().any(|v| !v.is_finite()) {
                return bad(format!("node {i}: non-finite feature"));
            }
        }
        for e in &self.edges {
            let w = distance(self.nodes[e.a].position, self.nodes[e.b].position);
            if w != e.weight {
                return bad(format!("edge ({}, {}) weight {} != {}", e.a, e.b, e.weight, w));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind == NodeKind::Landmark || i == self.current {
                let fe = self
                    .edges
                    .iter()
                    .filter(|e| {
                        (e.a == i && self.nodes[e.b].kind == NodeKind::Frontier)
                            || (e.b == i && self.nodes[e.a].kind == NodeKind::Frontier)
                    })
                    .count();
                if fe != 1 {
                    return bad(format!("node {i} has {fe} frontier edges"));
                }
            }
        }
        Ok(())
    }

    /// Text form:
    ///
    /// ```text
    /// exploration_graph v1
    /// nodes <N> edges <E> current <index>
    /// n <kind> <x> <y> <s1> <s2> <s3> <s4> <s5>     (N lines)
    /// e <a> <b> <weight>                           (E lines)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "exploration_graph v1").unwrap();
        writeln!(out, "nodes {} edges {} current {}", self.nodes.len(), self.edges.len(), self.current).unwrap();
        for n in &self.nodes {
            let f = n.feature;
            writeln!(out, "n {} {} {} {} {} {} {} {}", n.kind.tag(), n.position[0], n.position[1], f[0], f[1], f[2], f[3], f[4])
                .unwrap();
        }
        for e in &self.edges {
            writeln!(out, "e {} {} {}", e.a, e.b, e.weight).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let (l0, head) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        if head.trim() != "exploration_graph v1" {
            return Err(err(l0, "bad header"));
        }
        let (l1, counts) = lines.next().ok_or_else(|| err(l0 + 1, "missing counts"))?;
        let c: Vec<&str> = counts.split_whitespace().collect();
        if c.len() != 6 || c[0] != "nodes" || c[2] != "edges" || c[4] != "current" {
            return Err(err(l1, "bad counts line"));
        }
        let parse_usize = |s: &str, l: usize| s.parse::<usize>().map_err(|_| err(l, "bad integer"));
        let parse_f64 = |s: &str, l: usize| s.parse::<f64>().map_err(|_| err(l, "bad number"));
        let (n_nodes, n_edges, current) = (parse_usize(c[1], l1)?, parse_usize(c[3], l1)?, parse_usize(c[5], l1)?);
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (l, line) = lines.next().ok_or_else(|| err(l1, "missing node line"))?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 9 || t[0] != "n" {
                return Err(err(l, "bad node line"));
            }
            let kind = match t[1] {
                "pose" => NodeKind::Pose,
                "landmark" => NodeKind::Landmark,
                "frontier" => NodeKind::Frontier,
                _ => return Err(err(l, "unknown node kind")),
            };
            let mut feature = [0.0; 5];
            for k in 0..5 {
                feature[k] = parse_f64(t[4 + k], l)?;
            }
            nodes.push(Node { kind, position: [parse_f64(t[2], l)?, parse_f64(t[3], l)?], feature });
        }
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let (l, line) = lines.next().ok_or_else(|| err(l1, "missing edge line"))?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 4 || t[0] != "e" {
                return Err(err(l, "bad edge line"));
            }
            let (a, b) = (parse_usize(t[1], l)?, parse_usize(t[2], l)?);
            if a >= n_nodes || b >= n_nodes {
                return Err(err(l, "edge endpoint out of range"));
            }
            edges.push(Edge { a, b, weight: parse_f64(t[3], l)? });
        }
        if current >= n_nodes {
            return Err(err(l1, "current index out of range"));
        }
        let frontiers = nodes.iter().enumerate().filter(|(_, n)| n.kind == NodeKind::Frontier).map(|(i, _)| i).collect();
        Ok(Self { nodes, edges, current, frontiers })
    }
}
