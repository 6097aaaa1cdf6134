//! A small deep-learning toolkit for binary tumor classification with a
//! low-complexity CNN: two convolution/pooling blocks feeding three fully
//! connected layers, trained with Adam on 100x100 grayscale images.
//!
//! Layout of the crate:
//!
//! - [`tensor`], [`rng`]: NHWC tensors, GEMM, padding, seeded randomness.
//! - [`layers`]: convolution, max pooling, ReLU, batch norm, dense, dropout.
//! - [`loss`], [`optim`]: sigmoid + binary cross-entropy, Adam and SGD.
//! - [`augment`]: blur, jitter, rotation, translation, zoom and black-border crop.
//! - [`data`]: directory ingestion, stratified split, balancing, batching, synthetic data.
//! - [`model`]: architecture, training loop, metrics, weight files and curves.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod data;
mod error;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
mod real;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::Rng;
pub use tensor::{Dist, ElementOp, Shape, Tensor};
