//! Dense tensors, a reverse-mode tape and the RMSProp optimizer.

mod optim;
mod tape;
mod tensor;

pub use optim::{Parameter, RmsPropConfig, RmsPropState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
