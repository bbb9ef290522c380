//! Dense row-major tensors and a reverse-mode automatic differentiation tape.
//!
//! A [`Tape`] records every operation executed on it. Values live on the tape
//! and are addressed through [`Var`] handles; [`Tape::backward`] replays the
//! records in reverse and accumulates gradients into every leaf that requires
//! them. Parameters are kept outside the tape as [`Tensor`]s and are copied in
//! as leaves for each forward pass.

mod error;
mod kernels;
mod scalar;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use scalar::Scalar;
pub use tape::{CustomBackward, Tape, Var};
pub use tensor::Tensor;
