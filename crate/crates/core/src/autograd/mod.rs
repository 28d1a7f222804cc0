//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod params;
mod tape;
mod tensor;

pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{BackwardStats, PointwiseOp, Tape, Var};
pub use tensor::Tensor;
