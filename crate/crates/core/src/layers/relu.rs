use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Rectifier `max(0, x)`. The subgradient at exactly zero is zero.
#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.infer(x);
        self.input = Some(x.clone());
        y
    }

    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(Error::MissingCache("relu backward"))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::ShapeMismatch {
                op: "relu backward",
                left: x.dims().to_vec(),
                right: grad_out.dims().to_vec(),
            });
        }
        let data = x
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect();
        Tensor::from_vec(grad_out.dims().to_vec(), data)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_cases() {
        let mut r = Relu::new();
        let x = Tensor::<f64>::from_vec([3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(r.forward(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::<f64>::from_vec([3], vec![0.5, 1.0, 2.0]).unwrap();
        assert_eq!(r.infer(&pos), pos);
    }

    #[test]
    fn gating() {
        let mut r = Relu::new();
        let x = Tensor::<f64>::from_vec([2], vec![-1.0, 2.0]).unwrap();
        r.forward(&x);
        let g = Tensor::from_vec([2], vec![5.0, 7.0]).unwrap();
        assert_eq!(r.backward(&g).unwrap().data(), &[0.0, 7.0]);
    }

    #[test]
    fn backward_requires_forward() {
        let mut r = Relu::<f32>::new();
        let g = Tensor::fill([2], 1.0).unwrap();
        assert!(matches!(r.backward(&g), Err(Error::MissingCache(_))));
    }
}
