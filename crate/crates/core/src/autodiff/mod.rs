//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

pub mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport, InputReport};
pub use tape::{Activation, BackwardFault, BinaryOp, ElementwiseOp, Tape, Var};
pub use tensor::Tensor;
