//! Dense-tensor arithmetic, reverse-mode autodiff, Adam, gradient checking
//! and tensor persistence — everything the training modules differentiate
//! through.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod tensor;

pub use adam::{AdamParams, AdamState};
pub use gradcheck::finite_diff_check;
pub use graph::{Graph, NodeId};
pub use mlp::{forward_from_nodes, Layer, Mlp, MlpNodes};
pub use tensor::{Tensor, EPS_NORM};
