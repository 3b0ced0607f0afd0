//! Differentiable layers with explicit forward/backward passes, losses, Adam and a
//! finite-difference gradient checker.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod linalg;
pub mod loss;
pub mod lstm;
pub mod param;
pub mod tensor;

pub use activation::{global_avg_pool, global_avg_pool_backward, Dropout, DropoutMask, PRelu};
pub use adam::{adam_step, adam_update, clip_grad_norm, AdamConfig};
pub use batchnorm::BatchNorm2d;
pub use conv::Conv2d;
pub use dense::Dense;
pub use gradcheck::{grad_check, grad_check_piecewise, relative_error, GradCheckReport, FD_STEP};
pub use loss::{mse_loss, softmax_cross_entropy};
pub use lstm::{BiLstm, BiLstmLayer, LstmCell};
pub use param::{Module, Param};
pub use tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}
