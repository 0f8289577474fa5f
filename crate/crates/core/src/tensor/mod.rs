//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod checkpoint;
mod dense;
mod param;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use dense::{Tensor, TensorError};
pub use param::{Adam, AdamConfig, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
