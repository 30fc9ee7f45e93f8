//! Dense tensors, tape-based reverse-mode gradients, and the graph policy
//! networks (GCN and gated-graph) with their MLP scoring head.

mod adam;
mod batch;
mod model;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use batch::{edge_affinity, normalize_adjacency, GraphBatch};
pub use model::{
    argmax, dropout, gcn_forward, ggnn_forward, softmax, Dropout, Forward, HeadMode, LayerKind, PolicyParameters,
    CHECKPOINT_VERSION, DEFAULT_HIDDEN, GNN_LAYERS,
};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::{SparseMatrix, Tensor};
