use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::exploration_graph::ExplorationGraph;
use crate::gnn::GraphBatch;

/// `(G, f, r, G')` with the network input of both graphs cached.
#[derive(Debug, Clone)]
pub struct TransitionSample {
    pub graph: Arc<ExplorationGraph>,
    pub batch: Arc<GraphBatch>,
    /// Position of the chosen frontier in `graph.frontiers`.
    pub action: usize,
    pub reward: f64,
    pub next: Option<(Arc<ExplorationGraph>, Arc<GraphBatch>)>,
    pub terminal: bool,
}

impl TransitionSample {
    pub fn new(graph: ExplorationGraph, action: usize, reward: f64, next: Option<ExplorationGraph>, terminal: bool) -> Self {
        assert!(action < graph.frontiers.len(), "action must index a frontier");
        assert!((-1.0..=1.0).contains(&reward), "reward {reward} outside [-1, 1]");
        let terminal = terminal || next.is_none();
        let batch = Arc::new(GraphBatch::from_graph(&graph));
        let next = next.map(|g| {
            let b = Arc::new(GraphBatch::from_graph(&g));
            (Arc::new(g), b)
        });
        Self { graph: Arc::new(graph), batch, action, reward, next, terminal }
    }

    pub fn next_batch(&self) -> Option<&GraphBatch> {
        self.next.as_ref().map(|(_, b)| b.as_ref())
    }
}

/// Bounded FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<TransitionSample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, sample: TransitionSample) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(sample);
    }

    pub fn get(&self, i: usize) -> &TransitionSample {
        &self.items[i]
    }

    /// Indices of `n` distinct stored samples, uniformly at random.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        assert!(n <= self.items.len(), "minibatch larger than buffer");
        index::sample(rng, self.items.len(), n).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&TransitionSample> {
        self.sample_indices(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}
