//! A small reverse-mode automatic differentiation engine for NCHW image
//! networks on the CPU.
//!
//! Values are dense row-major [`Tensor`]s. Operations on [`Var`]s are recorded
//! on a [`Tape`] when at least one input is tracked; [`Tape::backward`] then
//! walks the records in reverse creation order. Every kernel is single
//! threaded with a fixed reduction order, so identical inputs always produce
//! bit-identical outputs and gradients.

mod element;
mod ops;
mod tape;
mod tensor;

pub use element::Element;
pub use ops::PadMode;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
