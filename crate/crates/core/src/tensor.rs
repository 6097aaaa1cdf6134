//! Dense row-major tensors in NHWC layout.

use std::fmt;

use crate::error::{Error, Result};
use crate::real::{gemm, MatRef, Real};
use crate::rng::Rng;

/// Ordered list of extents, each at least 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidShape(dims));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.0[i + 1];
        }
        s
    }

    /// Flat offset of a multi-index. `None` if out of bounds.
    pub fn flatten_index(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.0.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.0) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    pub fn unflatten_index(&self, mut offset: usize) -> Option<Vec<usize>> {
        if offset >= self.numel() {
            return None;
        }
        let mut idx = vec![0; self.0.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.0).rev() {
            *slot = offset % d;
            offset /= d;
        }
        Some(idx)
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std_dev: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Mul,
    Max,
}

impl ElementOp {
    #[inline]
    fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            ElementOp::Add => a + b,
            ElementOp::Sub => a - b,
            ElementOp::Mul => a * b,
            ElementOp::Max => {
                if b > a {
                    b
                } else {
                    a
                }
            }
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                shape.numel(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn fill(dims: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Self { shape, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::fill(dims, T::zero())
    }

    pub(crate) fn zeros_like(other: &Tensor<T>) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn random(dims: impl Into<Vec<usize>>, dist: Dist, rng: &mut Rng) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        let data = match dist {
            Dist::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::invalid(format!("uniform({lo}, {hi}) needs lo < hi")));
                }
                (0..n).map(|_| T::lit(rng.uniform(lo, hi))).collect()
            }
            Dist::Normal { mean, std_dev } => {
                if !(std_dev > 0.0) {
                    return Err(Error::invalid(format!("normal sigma {std_dev} must be > 0")));
                }
                (0..n).map(|_| T::lit(rng.normal(mean, std_dev))).collect()
            }
        };
        Ok(Self { shape, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros([n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.shape.flatten_index(index).map(|i| self.data[i])
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape.0,
                right: shape.0,
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Tensor-with-tensor elementwise op; shapes must match exactly.
    pub fn zip_with(&self, op: ElementOp, other: &Tensor<T>) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "elementwise",
                left: self.shape.0.clone(),
                right: other.shape.0.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op.apply(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scalar_op(&self, op: ElementOp, s: T) -> Self {
        self.map(|a| op.apply(a, s))
    }

    pub fn scale(&self, s: T) -> Self {
        self.scalar_op(ElementOp::Mul, s)
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(ElementOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(ElementOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(ElementOp::Mul, other)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|x| {
                let v = x.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        let (&[m, k], &[k2, n]) = (self.dims(), other.dims()) else {
            return Err(Error::ShapeMismatch {
                op: "matmul (rank)",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            MatRef::new(&self.data, m, k),
            MatRef::new(&other.data, k, n),
            T::zero(),
            &mut out,
        );
        Tensor::from_vec([m, n], out)
    }

    /// Zero-pad the spatial axes of an `H x W x C` or `B x H x W x C` tensor by
    /// `(k - 1) / 2` per side so a stride-1 valid convolution keeps `H x W`.
    pub fn pad2d_same(&self, kernel_h: usize, kernel_w: usize) -> Result<Self> {
        if kernel_h.is_multiple_of(2) || kernel_w.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "same padding needs odd kernel extents, got {kernel_h}x{kernel_w}"
            )));
        }
        let (b, h, w, c) = match *self.dims() {
            [h, w, c] => (None, h, w, c),
            [b, h, w, c] => (Some(b), h, w, c),
            _ => {
                return Err(Error::invalid(format!(
                    "pad2d_same expects rank 3 or 4, got {:?}",
                    self.shape
                )))
            }
        };
        let (ph, pw) = ((kernel_h - 1) / 2, (kernel_w - 1) / 2);
        let data = pad_nhwc(&self.data, b.unwrap_or(1), h, w, c, ph, pw);
        let (hp, wp) = (h + 2 * ph, w + 2 * pw);
        match b {
            Some(b) => Tensor::from_vec([b, hp, wp, c], data),
            None => Tensor::from_vec([hp, wp, c], data),
        }
    }

    /// Debug-build check that an operation produced only finite values.
    #[inline]
    pub(crate) fn debug_check_finite(&self, what: &str) {
        debug_assert!(self.all_finite(), "{what} produced a non-finite value");
    }
}

pub(crate) fn pad_nhwc<T: Real>(
    src: &[T],
    b: usize,
    h: usize,
    w: usize,
    c: usize,
    ph: usize,
    pw: usize,
) -> Vec<T> {
    if ph == 0 && pw == 0 {
        return src.to_vec();
    }
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let mut out = vec![T::zero(); b * hp * wp * c];
    for n in 0..b {
        for y in 0..h {
            let s = ((n * h + y) * w) * c;
            let d = ((n * hp + y + ph) * wp + pw) * c;
            out[d..d + w * c].copy_from_slice(&src[s..s + w * c]);
        }
    }
    out
}
