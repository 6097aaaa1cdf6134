use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Non-overlapping max pooling, stride equal to the window.
///
/// Output extents are `floor(input / window)`; trailing rows and columns that
/// do not fill a window are dropped. Ties go to the first maximal cell in
/// row-major window order, which is also where backward routes the gradient.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pool_h: usize,
    pool_w: usize,
    argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(pool_h: usize, pool_w: usize) -> Result<Self> {
        if pool_h == 0 || pool_w == 0 {
            return Err(Error::invalid("pool extents must be positive"));
        }
        Ok(Self {
            pool_h,
            pool_w,
            argmax: None,
        })
    }

    pub fn window(&self) -> (usize, usize) {
        (self.pool_h, self.pool_w)
    }

    pub fn output_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        if self.pool_h > in_h || self.pool_w > in_w {
            return Err(Error::invalid(format!(
                "pool {}x{} larger than input {in_h}x{in_w}",
                self.pool_h, self.pool_w
            )));
        }
        Ok((in_h / self.pool_h, in_w / self.pool_w))
    }

    fn run<T: Real>(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Vec<usize>)> {
        let &[b, h, w, c] = x.dims() else {
            return Err(Error::invalid(format!(
                "maxpool input must be B x H x W x C, got {:?}",
                x.dims()
            )));
        };
        let (oh, ow) = self.output_hw(h, w)?;
        let src = x.data();
        let mut out = vec![T::zero(); b * oh * ow * c];
        let mut arg = vec![0usize; if record { out.len() } else { 0 }];
        let mut best = vec![0usize; c];
        for n in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    let o = ((n * oh + i) * ow + j) * c;
                    let first = ((n * h + i * self.pool_h) * w + j * self.pool_w) * c;
                    let dst = &mut out[o..o + c];
                    dst.copy_from_slice(&src[first..first + c]);
                    for (ch, bi) in best.iter_mut().enumerate() {
                        *bi = first + ch;
                    }
                    // Row-major window scan with strict `>` keeps the first maximum.
                    for di in 0..self.pool_h {
                        for dj in 0..self.pool_w {
                            let s = ((n * h + i * self.pool_h + di) * w + j * self.pool_w + dj) * c;
                            for ((d, &v), (bi, idx)) in dst
                                .iter_mut()
                                .zip(&src[s..s + c])
                                .zip(best.iter_mut().zip(s..))
                            {
                                let gt = v > *d;
                                *d = if gt { v } else { *d };
                                *bi = if gt { idx } else { *bi };
                            }
                        }
                    }
                    if record {
                        arg[o..o + c].copy_from_slice(&best);
                    }
                }
            }
        }
        Ok((Tensor::from_vec([b, oh, ow, c], out)?, arg))
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, arg) = self.run(x, true)?;
        self.argmax = Some((arg, x.dims().to_vec()));
        Ok(y)
    }

    pub fn infer<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, false).map(|(y, _)| y)
    }

    pub fn backward<T: Real>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (arg, in_dims) = self
            .argmax
            .as_ref()
            .ok_or(Error::MissingCache("maxpool backward"))?;
        if grad_out.len() != arg.len() {
            return Err(Error::ShapeMismatch {
                op: "maxpool backward",
                left: grad_out.dims().to_vec(),
                right: in_dims.clone(),
            });
        }
        let mut dx = Tensor::zeros(in_dims.clone())?;
        let d = dx.data_mut();
        for (&idx, &g) in arg.iter().zip(grad_out.data()) {
            d[idx] = d[idx] + g;
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.argmax = None;
    }
}
