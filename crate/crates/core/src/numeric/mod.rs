//! Dense tensors, reverse-mode differentiation and a finite-difference
//! gradient checker.

mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::finite_difference_check;
pub use graph::{Gradients, Graph, ParamId, ParamStore, Var, LOG_FLOOR};
pub use tensor::Tensor;

pub(crate) use graph::dot_slices;
