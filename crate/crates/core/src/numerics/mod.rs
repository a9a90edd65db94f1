//! Deterministic random streams and the dense-math kernels shared by every trainer.

mod kernels;
mod matrix;
mod rng;

pub use kernels::{clamp_prob, loss_and_grad, loss_value, sigmoid, softmax, softmax_in_place, LossKind, PROB_EPS};
pub use matrix::{axpy, dense_forward, Matrix};
pub use rng::{mix64, RngStream};
