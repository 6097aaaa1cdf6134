//! Layers of the network, each with an explicit forward and backward pass.
//!
//! Every layer caches what its backward pass needs during `forward`; calling
//! `backward` without a preceding `forward` is an error. `infer` is the
//! cache-free eval-mode path used for evaluation and prediction, so it only
//! needs `&self`.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod pool;
mod relu;

pub use batchnorm::BatchNorm;
pub use conv::{Conv2d, Padding};
pub use dense::Dense;
pub use dropout::Dropout;
pub use pool::MaxPool2d;
pub use relu::Relu;

use crate::real::Real;
use crate::tensor::Tensor;

/// Train mode uses batch statistics and live dropout; eval mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor paired with its accumulated gradient.
pub struct Param<'a, T> {
    pub name: &'static str,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a Tensor<T>,
}

pub(crate) fn zero<T: Real>(t: &mut Tensor<T>) {
    t.data_mut().fill(T::zero());
}
