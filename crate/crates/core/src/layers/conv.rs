//! 2-D convolution over NHWC tensors, stride 1, no bias.
//!
//! `y[b, i, j, s] = sum_{di, dj, k} G[di, dj, k, s] * x_pad[b, i + di, j + dj, k]`
//!
//! Implemented as im2col over the whole batch followed by one GEMM with the
//! kernel bank viewed as a `(kh * kw * C_in) x S` matrix.

use crate::error::{Error, Result};
use crate::real::{gemm, MatRef, Real};
use crate::rng::Rng;
use crate::tensor::{pad_nhwc, Dist, Tensor};

use super::{zero, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad by `(k - 1) / 2` so the output keeps the input's spatial extent.
    Same,
    /// No padding; output extent is `input - kernel + 1`.
    Valid,
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    kernels: Tensor<T>,
    grad_kernels: Tensor<T>,
    padding: Padding,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    /// im2col matrix of the whole batch, `(B * out_h * out_w) x (kh * kw * C_in)`.
    cols: Vec<T>,
    geom: Geometry,
}

/// Samples per im2col chunk in inference, bounding scratch memory.
const INFER_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    in_h: usize,
    in_w: usize,
    pad_h: usize,
    pad_w: usize,
    out_h: usize,
    out_w: usize,
}

impl<T: Real> Conv2d<T> {
    /// He-initialized kernel bank of shape `kh x kw x c_in x c_out`.
    pub fn new(
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = (kernel_h * kernel_w * in_channels) as f64;
        let kernels = Tensor::random(
            [kernel_h, kernel_w, in_channels, out_channels],
            Dist::Normal {
                mean: 0.0,
                std_dev: (2.0 / fan_in).sqrt(),
            },
            rng,
        )?;
        Self::from_kernels(kernels, padding)
    }

    pub fn from_kernels(kernels: Tensor<T>, padding: Padding) -> Result<Self> {
        let &[kh, kw, _, _] = kernels.dims() else {
            return Err(Error::invalid(format!(
                "conv kernels must be rank 4, got {:?}",
                kernels.dims()
            )));
        };
        if padding == Padding::Same && (kh % 2 == 0 || kw % 2 == 0) {
            return Err(Error::invalid(format!(
                "same padding needs odd kernel extents, got {kh}x{kw}"
            )));
        }
        Ok(Self {
            grad_kernels: Tensor::zeros_like(&kernels),
            kernels,
            padding,
            cache: None,
        })
    }

    pub fn kernels(&self) -> &Tensor<T> {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut Tensor<T> {
        &mut self.kernels
    }

    pub fn grad_kernels(&self) -> &Tensor<T> {
        &self.grad_kernels
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    fn kdims(&self) -> (usize, usize, usize, usize) {
        let d = self.kernels.dims();
        (d[0], d[1], d[2], d[3])
    }

    /// Output `(H, W)` for a given input extent, or an error if the kernel does not fit.
    pub fn output_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let (kh, kw, _, _) = self.kdims();
        match self.padding {
            Padding::Same => Ok((in_h, in_w)),
            Padding::Valid if kh <= in_h && kw <= in_w => Ok((in_h - kh + 1, in_w - kw + 1)),
            Padding::Valid => Err(Error::invalid(format!(
                "kernel {kh}x{kw} larger than input {in_h}x{in_w}"
            ))),
        }
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        let (kh, kw, cin, _) = self.kdims();
        let &[batch, in_h, in_w, c] = x.dims() else {
            return Err(Error::invalid(format!(
                "conv input must be B x H x W x C, got {:?}",
                x.dims()
            )));
        };
        if c != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d channels",
                left: x.dims().to_vec(),
                right: self.kernels.dims().to_vec(),
            });
        }
        let (out_h, out_w) = self.output_hw(in_h, in_w)?;
        let (pad_h, pad_w) = match self.padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (0, 0),
        };
        Ok(Geometry {
            batch,
            in_h,
            in_w,
            pad_h,
            pad_w,
            out_h,
            out_w,
        })
    }

    /// im2col of samples `range` of the padded batch.
    fn columns(&self, padded: &[T], g: Geometry, range: std::ops::Range<usize>) -> Vec<T> {
        let (kh, kw, cin, _) = self.kdims();
        let k = kh * kw * cin;
        let rows = g.out_h * g.out_w;
        let sample_in = (g.in_h + 2 * g.pad_h) * (g.in_w + 2 * g.pad_w) * cin;
        let mut cols = vec![T::zero(); range.len() * rows * k];
        for (dst, b) in cols.chunks_exact_mut(rows * k).zip(range) {
            self.im2col(&padded[b * sample_in..(b + 1) * sample_in], g, dst);
        }
        cols
    }

    fn apply(&self, cols: &[T], out: &mut [T]) {
        let (kh, kw, cin, cout) = self.kdims();
        let k = kh * kw * cin;
        gemm(
            MatRef::new(cols, cols.len() / k, k),
            MatRef::new(self.kernels.data(), k, cout),
            T::zero(),
            out,
        );
    }

    fn output(&self, out: Vec<T>, g: Geometry) -> Result<Tensor<T>> {
        let y = Tensor::from_vec([g.batch, g.out_h, g.out_w, self.kdims().3], out)?;
        y.debug_check_finite("conv2d forward");
        Ok(y)
    }

    /// Row `i * out_w + j` holds the receptive field of output cell `(i, j)`
    /// in `(di, dj, channel)` order, matching the kernel's row layout.
    fn im2col(&self, src: &[T], g: Geometry, cols: &mut [T]) {
        let (kh, kw, cin, _) = self.kdims();
        let wp = g.in_w + 2 * g.pad_w;
        let seg = kw * cin;
        let k = kh * seg;
        for i in 0..g.out_h {
            for j in 0..g.out_w {
                let row = &mut cols[(i * g.out_w + j) * k..][..k];
                for di in 0..kh {
                    let s = ((i + di) * wp + j) * cin;
                    row[di * seg..(di + 1) * seg].copy_from_slice(&src[s..s + seg]);
                }
            }
        }
    }

    fn col2im_add(&self, dcols: &[T], g: Geometry, dst: &mut [T]) {
        let (kh, kw, cin, _) = self.kdims();
        let wp = g.in_w + 2 * g.pad_w;
        let seg = kw * cin;
        let k = kh * seg;
        for i in 0..g.out_h {
            for j in 0..g.out_w {
                let row = &dcols[(i * g.out_w + j) * k..][..k];
                for di in 0..kh {
                    let s = ((i + di) * wp + j) * cin;
                    for (d, &v) in dst[s..s + seg].iter_mut().zip(&row[di * seg..]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let padded = pad_nhwc(x.data(), g.batch, g.in_h, g.in_w, x.dims()[3], g.pad_h, g.pad_w);
        let cols = self.columns(&padded, g, 0..g.batch);
        let mut out = vec![T::zero(); g.batch * g.out_h * g.out_w * self.kdims().3];
        self.apply(&cols, &mut out);
        self.cache = Some(ConvCache { cols, geom: g });
        self.output(out, g)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let padded = pad_nhwc(x.data(), g.batch, g.in_h, g.in_w, x.dims()[3], g.pad_h, g.pad_w);
        let per_sample = g.out_h * g.out_w * self.kdims().3;
        let mut out = vec![T::zero(); g.batch * per_sample];
        for (c, dst) in out.chunks_mut(INFER_CHUNK * per_sample).enumerate() {
            let start = c * INFER_CHUNK;
            let cols = self.columns(&padded, g, start..start + dst.len() / per_sample);
            self.apply(&cols, dst);
        }
        self.output(out, g)
    }

    /// Accumulates the kernel gradient and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_impl(grad_out, true)
            .map(|dx| dx.expect("input gradient requested"))
    }

    /// Accumulates the kernel gradient only; used for the first layer, whose
    /// input gradient nobody consumes.
    pub fn backward_kernels_only(&mut self, grad_out: &Tensor<T>) -> Result<()> {
        self.backward_impl(grad_out, false).map(|_| ())
    }

    fn backward_impl(&mut self, grad_out: &Tensor<T>, want_dx: bool) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::MissingCache("conv2d backward"))?;
        let g = cache.geom;
        let (kh, kw, cin, cout) = self.kdims();
        if grad_out.dims() != [g.batch, g.out_h, g.out_w, cout] {
            return Err(Error::ShapeMismatch {
                op: "conv2d backward",
                left: grad_out.dims().to_vec(),
                right: vec![g.batch, g.out_h, g.out_w, cout],
            });
        }
        let k = kh * kw * cin;
        let rows = g.out_h * g.out_w;
        let (hp, wp) = (g.in_h + 2 * g.pad_h, g.in_w + 2 * g.pad_w);
        let sample_in = hp * wp * cin;
        let dy = grad_out.data();
        gemm(
            MatRef::new(&cache.cols, g.batch * rows, k).t(),
            MatRef::new(dy, g.batch * rows, cout),
            T::one(),
            self.grad_kernels.data_mut(),
        );
        if !want_dx {
            return Ok(None);
        }
        let mut dcols = vec![T::zero(); g.batch * rows * k];
        gemm(
            MatRef::new(dy, g.batch * rows, cout),
            MatRef::new(self.kernels.data(), k, cout).t(),
            T::zero(),
            &mut dcols,
        );
        let mut dpadded = vec![T::zero(); g.batch * sample_in];
        for (b, dc) in dcols.chunks_exact(rows * k).enumerate() {
            self.col2im_add(dc, g, &mut dpadded[b * sample_in..(b + 1) * sample_in]);
        }
        let mut dx = Vec::with_capacity(g.batch * g.in_h * g.in_w * cin);
        for b in 0..g.batch {
            for y in 0..g.in_h {
                let s = ((b * hp + y + g.pad_h) * wp + g.pad_w) * cin;
                dx.extend_from_slice(&dpadded[s..s + g.in_w * cin]);
            }
        }
        Ok(Some(Tensor::from_vec([g.batch, g.in_h, g.in_w, cin], dx)?))
    }

    pub fn zero_grad(&mut self) {
        zero(&mut self.grad_kernels);
    }

    pub fn params(&mut self) -> Vec<Param<'_, T>> {
        vec![Param {
            name: "kernels",
            value: &mut self.kernels,
            grad: &self.grad_kernels,
        }]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
