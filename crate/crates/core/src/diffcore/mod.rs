//! Dense tensors, a reverse-mode tape, Adam and the shared loss terms.

mod adam;
mod gradcheck;
mod loss;
mod sparse;
mod tape;
mod tensor;
pub mod trig;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{finite_diff_check, GradCheck, Probe};
pub use loss::{difference_operators, mse, mse_loss, tv, tv_penalty, LossKind, LossTerm};
pub use sparse::SparseMatrix;
pub use tape::{value_and_grad, CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
pub(crate) use tensor::gemm;
