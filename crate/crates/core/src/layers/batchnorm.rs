//! Per-channel batch normalization over the trailing axis.
//!
//! Train mode standardizes with the biased batch variance and folds the
//! unbiased variance into the running estimate:
//! `running = momentum * running + (1 - momentum) * batch`.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

use super::{zero, Mode, Param};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    gamma: Tensor<T>,
    beta: Tensor<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    grad_gamma: Tensor<T>,
    grad_beta: Tensor<T>,
    momentum: f64,
    eps: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<f64>,
    dims: Vec<usize>,
    mode: Mode,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Self::with_hyper(channels, DEFAULT_MOMENTUM, DEFAULT_EPS)
    }

    pub fn with_hyper(channels: usize, momentum: f64, eps: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum < 1.0) || !(eps > 0.0) {
            return Err(Error::invalid(format!(
                "batch norm needs momentum in (0,1) and eps > 0, got {momentum}, {eps}"
            )));
        }
        Ok(Self {
            gamma: Tensor::fill([channels], T::one())?,
            beta: Tensor::zeros([channels])?,
            running_mean: Tensor::zeros([channels])?,
            running_var: Tensor::fill([channels], T::one())?,
            grad_gamma: Tensor::zeros([channels])?,
            grad_beta: Tensor::zeros([channels])?,
            momentum,
            eps,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &Tensor<T> {
        &self.gamma
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor<T> {
        &mut self.gamma
    }

    pub fn beta(&self) -> &Tensor<T> {
        &self.beta
    }

    pub fn beta_mut(&mut self) -> &mut Tensor<T> {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &Tensor<T> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor<T> {
        &self.running_var
    }

    pub fn running_mut(&mut self) -> (&mut Tensor<T>, &mut Tensor<T>) {
        (&mut self.running_mean, &mut self.running_var)
    }

    /// Mutable access to gamma, beta, running mean and running variance.
    pub fn state_mut(&mut self) -> [&mut Tensor<T>; 4] {
        [
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    pub fn grad_gamma(&self) -> &Tensor<T> {
        &self.grad_gamma
    }

    pub fn grad_beta(&self) -> &Tensor<T> {
        &self.grad_beta
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let c = *x.dims().last().expect("rank >= 1");
        if x.dims().len() < 2 || c != self.channels() {
            return Err(Error::ShapeMismatch {
                op: "batchnorm",
                left: x.dims().to_vec(),
                right: vec![self.channels()],
            });
        }
        Ok(c)
    }

    /// Normalize with per-channel statistics. `xhat` is kept only when a
    /// backward pass will need it.
    fn affine(&self, x: &Tensor<T>, mean: &[f64], inv_std: &[f64], keep_xhat: bool) -> (Vec<T>, Tensor<T>) {
        let mean: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
        let inv: Vec<T> = inv_std.iter().map(|&v| T::lit(v)).collect();
        let (g, b) = (self.gamma.data(), self.beta.data());
        let c = self.channels();
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = Vec::new();
        if keep_xhat {
            xhat = vec![T::zero(); x.len()];
            for ((row, h), out) in x.data().chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
                for ch in 0..c {
                    h[ch] = (row[ch] - mean[ch]) * inv[ch];
                    out[ch] = g[ch] * h[ch] + b[ch];
                }
            }
        } else {
            for (row, out) in x.data().chunks_exact(c).zip(y.chunks_exact_mut(c)) {
                for ch in 0..c {
                    out[ch] = g[ch] * ((row[ch] - mean[ch]) * inv[ch]) + b[ch];
                }
            }
        }
        let y = Tensor::from_vec(x.dims().to_vec(), y).expect("same shape");
        y.debug_check_finite("batchnorm forward");
        (xhat, y)
    }

    fn running_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = self.running_mean.data().iter().map(|v| v.as_f64()).collect();
        let inv = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v.as_f64() + self.eps).sqrt())
            .collect();
        (mean, inv)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (mean, inv) = self.running_stats();
        Ok(self.affine(x, &mean, &inv, false).1)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let c = self.check_input(x)?;
        if mode == Mode::Eval {
            let (mean, inv) = self.running_stats();
            let (xhat, y) = self.affine(x, &mean, &inv, true);
            self.cache = Some(BnCache {
                xhat,
                inv_std: inv,
                dims: x.dims().to_vec(),
                mode,
            });
            return Ok(y);
        }
        if x.dims()[0] < 2 {
            return Err(Error::invalid(
                "batch norm in train mode needs a batch of at least 2",
            ));
        }
        let count = (x.len() / c) as f64;
        let mut mean = vec![0.0f64; c];
        for row in x.data().chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0f64; c];
        for row in x.data().chunks_exact(c) {
            for ((acc, m), v) in var.iter_mut().zip(&mean).zip(row) {
                let d = v.as_f64() - m;
                *acc += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= count);
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (xhat, y) = self.affine(x, &mean, &inv, true);

        let mom = self.momentum;
        let unbias = count / (count - 1.0);
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = T::lit(mom * rm.as_f64() + (1.0 - mom) * mean[ch]);
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = T::lit(mom * rv.as_f64() + (1.0 - mom) * var[ch] * unbias);
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std: inv,
            dims: x.dims().to_vec(),
            mode,
        });
        Ok(y)
    }

    /// Accumulates gamma/beta gradients; returns the input gradient for the
    /// mode used in the matching forward.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::MissingCache("batchnorm backward"))?;
        if grad_out.dims() != cache.dims.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "batchnorm backward",
                left: grad_out.dims().to_vec(),
                right: cache.dims.clone(),
            });
        }
        let c = self.channels();
        let count = (grad_out.len() / c) as f64;
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (dy, xh) in grad_out
            .data()
            .chunks_exact(c)
            .zip(cache.xhat.chunks_exact(c))
        {
            for ch in 0..c {
                let g = dy[ch].as_f64();
                sum_dy[ch] += g;
                sum_dy_xhat[ch] += g * xh[ch].as_f64();
            }
        }
        for ch in 0..c {
            let gg = &mut self.grad_gamma.data_mut()[ch];
            *gg = *gg + T::lit(sum_dy_xhat[ch]);
            let gb = &mut self.grad_beta.data_mut()[ch];
            *gb = *gb + T::lit(sum_dy[ch]);
        }
        // Train mode: dx = k1 * dy - k2 - k3 * xhat with the batch sums folded
        // into per-channel constants. Eval mode keeps only the k1 term.
        let k1: Vec<f64> = self
            .gamma
            .data()
            .iter()
            .zip(&cache.inv_std)
            .map(|(g, inv)| g.as_f64() * inv)
            .collect();
        let (k2, k3): (Vec<f64>, Vec<f64>) = match cache.mode {
            Mode::Eval => (vec![0.0; c], vec![0.0; c]),
            Mode::Train => (0..c)
                .map(|ch| (k1[ch] * sum_dy[ch] / count, k1[ch] * sum_dy_xhat[ch] / count))
                .unzip(),
        };
        let mut dx = vec![T::zero(); grad_out.len()];
        match cache.mode {
            Mode::Eval => {
                for (dy, out) in grad_out.data().chunks_exact(c).zip(dx.chunks_exact_mut(c)) {
                    for ch in 0..c {
                        out[ch] = T::lit(k1[ch] * dy[ch].as_f64());
                    }
                }
            }
            Mode::Train => {
                for ((dy, xh), out) in grad_out
                    .data()
                    .chunks_exact(c)
                    .zip(cache.xhat.chunks_exact(c))
                    .zip(dx.chunks_exact_mut(c))
                {
                    for ch in 0..c {
                        out[ch] = T::lit(k1[ch] * dy[ch].as_f64() - k2[ch] - k3[ch] * xh[ch].as_f64());
                    }
                }
            }
        }
        Tensor::from_vec(cache.dims.clone(), dx)
    }

    pub fn zero_grad(&mut self) {
        zero(&mut self.grad_gamma);
        zero(&mut self.grad_beta);
    }

    pub fn params(&mut self) -> Vec<Param<'_, T>> {
        vec![
            Param {
                name: "gamma",
                value: &mut self.gamma,
                grad: &self.grad_gamma,
            },
            Param {
                name: "beta",
                value: &mut self.beta,
                grad: &self.grad_beta,
            },
        ]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Dist;

    #[test]
    fn standardizes_per_channel() {
        let mut bn = BatchNorm::<f64>::new(3).unwrap();
        let x = Tensor::random([4, 5, 5, 3], Dist::Uniform { lo: -3.0, hi: 7.0 }, &mut Rng::new(1))
            .unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(3).copied().collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn constant_batch_yields_beta() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        bn.beta_mut().data_mut().copy_from_slice(&[0.3, -0.7]);
        let x = Tensor::fill([4, 2, 2, 2], 5.0).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let beta = if i % 2 == 0 { 0.3 } else { -0.7 };
            assert!((v - beta).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train() {
        let mut bn = BatchNorm::<f32>::new(2).unwrap();
        let x = Tensor::fill([1, 3, 3, 2], 1.0).unwrap();
        assert!(bn.forward(&x, Mode::Train).is_err());
        assert!(bn.forward(&x, Mode::Eval).is_ok());
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        let x = Tensor::from_vec([4, 1], vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean().data()[0] - 2.5).abs() < 1e-12);
        let unbiased = 500.0 / 3.0;
        assert!((bn.running_var().data()[0] - (0.9 + 0.1 * unbiased)).abs() < 1e-9);
        let y = bn.infer(&x).unwrap();
        let expect = (10.0 - 2.5) / (bn.running_var().data()[0] + 1e-5).sqrt();
        assert!((y.data()[0] - expect).abs() < 1e-12);
        assert!(bn.running_var().data().iter().all(|&v| v >= 0.0));
    }
}
