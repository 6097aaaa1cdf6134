use crate::error::{Error, Result};
use crate::real::{gemm, MatRef, Real};
use crate::rng::Rng;
use crate::tensor::{Dist, Tensor};

use super::{zero, Param};

/// Fully connected layer `y = x W + b` with `W: fan_in x fan_out`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    weights: Tensor<T>,
    bias: Tensor<T>,
    grad_weights: Tensor<T>,
    grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    /// He-initialized weights, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Self> {
        let weights = Tensor::random(
            [fan_in, fan_out],
            Dist::Normal {
                mean: 0.0,
                std_dev: (2.0 / fan_in as f64).sqrt(),
            },
            rng,
        )?;
        Self::from_parts(weights, Tensor::zeros([fan_out])?)
    }

    pub fn from_parts(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        match (weights.dims(), bias.dims()) {
            (&[_, out], &[b]) if out == b => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "dense parameters",
                    left: weights.dims().to_vec(),
                    right: bias.dims().to_vec(),
                })
            }
        }
        Ok(Self {
            grad_weights: Tensor::zeros_like(&weights),
            grad_bias: Tensor::zeros_like(&bias),
            weights,
            bias,
            input: None,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn grad_weights(&self) -> &Tensor<T> {
        &self.grad_weights
    }

    pub fn grad_bias(&self) -> &Tensor<T> {
        &self.grad_bias
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[batch, fan_in] = x.dims() else {
            return Err(Error::invalid(format!(
                "dense input must be B x fan_in, got {:?}",
                x.dims()
            )));
        };
        if fan_in != self.fan_in() {
            return Err(Error::ShapeMismatch {
                op: "dense",
                left: x.dims().to_vec(),
                right: self.weights.dims().to_vec(),
            });
        }
        let n = self.fan_out();
        let mut out = Vec::with_capacity(batch * n);
        for _ in 0..batch {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            MatRef::new(x.data(), batch, fan_in),
            MatRef::new(self.weights.data(), fan_in, n),
            T::one(),
            &mut out,
        );
        let y = Tensor::from_vec([batch, n], out)?;
        y.debug_check_finite("dense forward");
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(Error::MissingCache("dense backward"))?;
        let batch = x.dims()[0];
        let (fan_in, n) = (self.fan_in(), self.fan_out());
        if grad_out.dims() != [batch, n] {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                left: grad_out.dims().to_vec(),
                right: vec![batch, n],
            });
        }
        gemm(
            MatRef::new(x.data(), batch, fan_in).t(),
            MatRef::new(grad_out.data(), batch, n),
            T::one(),
            self.grad_weights.data_mut(),
        );
        let gb = self.grad_bias.data_mut();
        for row in grad_out.data().chunks_exact(n) {
            for (acc, &g) in gb.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        let mut dx = vec![T::zero(); batch * fan_in];
        gemm(
            MatRef::new(grad_out.data(), batch, n),
            MatRef::new(self.weights.data(), fan_in, n).t(),
            T::zero(),
            &mut dx,
        );
        Tensor::from_vec([batch, fan_in], dx)
    }

    pub fn zero_grad(&mut self) {
        zero(&mut self.grad_weights);
        zero(&mut self.grad_bias);
    }

    pub fn params(&mut self) -> Vec<Param<'_, T>> {
        vec![
            Param {
                name: "weights",
                value: &mut self.weights,
                grad: &self.grad_weights,
            },
            Param {
                name: "bias",
                value: &mut self.bias,
                grad: &self.grad_bias,
            },
        ]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}
