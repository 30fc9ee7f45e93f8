use std::sync::Arc;

use super::tensor::{SparseMatrix, Tensor};
use crate::exploration_graph::{ExplorationGraph, NodeKind, FEATURE_DIM};

/// Edge affinity for a distance in meters; closer nodes couple more strongly.
pub fn edge_affinity(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

/// Symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` of the affinity-weighted
/// adjacency with unit self-loops.
pub fn normalize_adjacency(graph: &ExplorationGraph) -> SparseMatrix {
    let n = graph.num_nodes();
    let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    for e in &graph.edges {
        let a = edge_affinity(e.weight);
        triplets.push((e.a, e.b, a));
        if e.a != e.b {
            triplets.push((e.b, e.a, a));
        }
    }
    let mut degree = vec![0.0; n];
    for &(r, _, v) in &triplets {
        degree[r] += v;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let scaled: Vec<(usize, usize, f64)> =
        triplets.into_iter().map(|(r, c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c])).collect();
    SparseMatrix::from_triplets(n, &scaled)
}

/// Network input derived from one exploration graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub adjacency: Arc<SparseMatrix>,
    /// N × 5 node features.
    pub features: Tensor,
    pub frontier_mask: Vec<bool>,
    /// Node rows of the frontiers, in action order.
    pub frontier_rows: Vec<usize>,
}

impl GraphBatch {
    pub fn from_graph(graph: &ExplorationGraph) -> Self {
        let n = graph.num_nodes();
        let features = Tensor::from_fn(n, FEATURE_DIM, |r, c| graph.nodes[r].feature[c]);
        let frontier_mask = graph.nodes.iter().map(|node| node.kind == NodeKind::Frontier).collect();
        Self {
            adjacency: Arc::new(normalize_adjacency(graph)),
            features,
            frontier_mask,
            frontier_rows: graph.frontiers.clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_frontiers(&self) -> usize {
        self.frontier_rows.len()
    }
}
