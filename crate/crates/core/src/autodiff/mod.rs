//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Everything the networks and both GAN losses need: a [`Tensor`] value type,
//! a [`Tape`] that records primitives and replays them backward, and
//! finite-difference gradient checking.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_multi};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
