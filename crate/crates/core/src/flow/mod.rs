//! Conditional normalizing flow `f_v` with a standard normal base.
//!
//! Each block applies actnorm, a fixed permutation, an affine coupling whose
//! shift and log-scale come from a small network over `[x_a, v]`, and the
//! inverse permutation. With identity initialization the whole flow is the
//! identity map and `mode(v) = f_v(0) = 0`.

mod layers;
mod model;

pub use layers::{BoundMlp, Dense, Mlp, StoredTensor};
pub use model::{
    graph_standard_normal_log_density, standard_normal_log_density, standard_normal_rows,
    BoundFlow, ConditionedFlow, FlowBlock, FlowConfig, StoredBlock, StoredFlow,
};
