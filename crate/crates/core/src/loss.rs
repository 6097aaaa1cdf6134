//! Sigmoid output activation and binary cross-entropy.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Predictions are clamped into `[EPS_CLAMP, 1 - EPS_CLAMP]` before taking logs.
pub const EPS_CLAMP: f64 = 1e-7;

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid<T: Real>(z: &Tensor<T>) -> Tensor<T> {
    z.map(|v| T::lit(sigmoid_scalar(v.as_f64())))
}

/// `-(y ln p + (1 - y) ln(1 - p))` for one sample, with `p` clamped.
pub fn bce(y: f64, p: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::invalid(format!("label {y} is not 0 or 1")));
    }
    let p = p.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    Ok(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
}

/// Batch-mean loss together with its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: f64,
    /// `(sigmoid(z) - y) / B`: the gradient of the mean loss through the fused
    /// sigmoid + BCE form.
    pub grad_wrt_logit: Tensor<T>,
    pub probabilities: Vec<f64>,
}

/// Mean BCE of `sigmoid(logits)` against binary `labels`.
pub fn bce_with_logits<T: Real>(labels: &[f64], logits: &Tensor<T>) -> Result<LossValue<T>> {
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "bce",
            left: logits.dims().to_vec(),
            right: vec![labels.len()],
        });
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut probabilities = Vec::with_capacity(labels.len());
    let mut grad = Vec::with_capacity(labels.len());
    for (&y, z) in labels.iter().zip(logits.data()) {
        let p = sigmoid_scalar(z.as_f64());
        total += bce(y, p)?;
        probabilities.push(p);
        grad.push(T::lit((p - y) / n));
    }
    Ok(LossValue {
        value: total / n,
        grad_wrt_logit: Tensor::from_vec(logits.dims().to_vec(), grad)?,
        probabilities,
    })
}
