//! Minimal dense arrays with reverse-mode differentiation and Adam.
//!
//! Graphs are define-by-run: callers build a fresh [`Graph`] per minibatch,
//! evaluate a scalar, call [`Graph::backward`] and feed the parameter
//! gradients to [`AdamState::step`]. All arithmetic is `f64`.

mod adam;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState, Param};
pub use graph::{Gradients, Graph, NodeId, OpKind};
pub use tensor::Tensor;
