//! Minimal differentiable substrate: dense matrices, forward primitives,
//! a reverse-mode tape and a finite-difference gradient checker.

pub mod gradcheck;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use ops::Axis;
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{CustomOp, Tape, Var};
pub use tensor::{cosine, dot, l2_norm, Tensor2};
