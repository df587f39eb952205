//! Minimal numeric substrate: tensors, layers with hand-written reverse
//! passes, losses, categorical sampling and Adam.

pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
mod params;
mod real;
mod tensor;

pub use layers::Activation;
pub use optim::{adam_update, AdamState};
pub use params::{Grads, ParamId, ParamStore, Values};
pub use real::{gemm, MatRef, Real};
pub use tensor::{ensure_finite, Tensor};
