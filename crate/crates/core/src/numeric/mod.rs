//! Dense numeric core: matrices, a reverse-mode tape, stochastic
//! regularization, the Adam optimizer, and gradient verification.

pub mod gradcheck;
pub mod matrix;
pub mod param;
pub mod rng;
pub mod tape;

pub use gradcheck::{finite_diff_check, FdReport, FdSettings};
pub use matrix::{affine, logsumexp, softmax, Matrix};
pub use param::{ParamBlock, ParamId, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use rng::Rng;
pub use tape::{dropout, dropout_mask, Tape, Var};
