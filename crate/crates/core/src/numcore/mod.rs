//! Minimal tensor arithmetic with taped reverse-mode gradients and ADAM.
//!
//! Values are `f64` throughout. A [`Tape`] records one forward pass; calling
//! [`Tape::backward`] on a scalar loss accumulates gradients into every leaf
//! that requires them, and [`Tape::accumulate_param_grads`] copies those into
//! the matching [`ParamSet`] entries.

mod adam;
pub mod checkpoint;
mod kernels;
mod tape;
mod tensor;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{Activation, Tape, Var};
pub use tensor::{ParamSet, Tensor};
