//! Tape-based reverse-mode automatic differentiation over dense `f64`
//! tensors, plus an Adam optimizer.
//!
//! A [`Graph`] records every operation applied to its nodes. Calling
//! [`Graph::backward`] on a scalar node replays the tape in reverse and
//! returns the gradient of that scalar with respect to every node flagged as
//! requiring gradients.
//!
//! ```
//! use diffcore::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::scalar(3.0));
//! let y = g.mul(x, x);
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).item(), 6.0);
//! ```
//!
//! Graphs are single-threaded. Independent graphs can be built on separate
//! threads and their gradients summed.

mod adam;
mod error;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::DiffError;
pub use graph::{Gradients, Graph, OpKind, Var};
pub use tensor::Tensor;
