//! Tensor arithmetic, reverse-mode differentiation and the AdamW optimizer.

mod adamw;
mod gradcheck;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use gradcheck::finite_diff_check;
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
