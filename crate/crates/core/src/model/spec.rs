use std::fmt;

use crate::error::{Error, Result};
use crate::layers::Padding;
use crate::real::Real;
use crate::rng::Rng;

use super::network::Model;

/// One entry of the ordered layer list.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        kernels: usize,
        size: usize,
        padding: Padding,
    },
    BatchNorm,
    Relu,
    MaxPool {
        size: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::BatchNorm => "bn",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "pool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }
}

/// Input extent plus an ordered layer list. The network emits one logit; the
/// sigmoid that turns it into a probability is applied by the caller
/// ([`Model::predict`] or the fused loss).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_hw: (usize, usize),
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// The low-complexity tumor classifier: two conv/BN/ReLU/pool blocks
    /// (32 kernels of 9x9, then `conv2_kernels` of 5x5, 4x4 pooling, same
    /// padding) and dense layers of 4096, 1024 and 1 units with dropout after
    /// the first.
    pub fn standard(conv2_kernels: usize) -> Self {
        use LayerSpec::*;
        Self {
            input_hw: (100, 100),
            input_channels: 1,
            layers: vec![
                Conv {
                    kernels: 32,
                    size: 9,
                    padding: Padding::Same,
                },
                BatchNorm,
                Relu,
                MaxPool { size: 4 },
                Conv {
                    kernels: conv2_kernels,
                    size: 5,
                    padding: Padding::Same,
                },
                BatchNorm,
                Relu,
                MaxPool { size: 4 },
                Flatten,
                Dense { units: 4096 },
                Relu,
                Dropout { rate: 0.5 },
                Dense { units: 1024 },
                Relu,
                Dense { units: 1 },
            ],
        }
    }

    /// 8x8 miniature with the same layer types, small enough for
    /// finite-difference checks of every parameter.
    pub fn tiny() -> Self {
        use LayerSpec::*;
        Self {
            input_hw: (8, 8),
            input_channels: 1,
            layers: vec![
                Conv {
                    kernels: 2,
                    size: 3,
                    padding: Padding::Same,
                },
                BatchNorm,
                Relu,
                MaxPool { size: 2 },
                Conv {
                    kernels: 1,
                    size: 3,
                    padding: Padding::Same,
                },
                BatchNorm,
                Relu,
                MaxPool { size: 2 },
                Flatten,
                Dense { units: 1 },
            ],
        }
    }

    /// Per-layer output shapes and parameter counts, validating the list.
    pub fn trace(&self) -> Result<Vec<LayerShape>> {
        let (mut h, mut w) = self.input_hw;
        let mut c = self.input_channels;
        let mut flat: Option<usize> = None;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::invalid("model input extents must be positive"));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut counters = std::collections::HashMap::new();
        for (index, layer) in self.layers.iter().enumerate() {
            let kind = layer.kind();
            let fail = |reason: String| Error::LayerSpec {
                index,
                kind,
                reason,
            };
            let ordinal = counters.entry(kind).or_insert(0usize);
            *ordinal += 1;
            let name = format!("{kind}{ordinal}");
            let mut params = 0;
            match *layer {
                LayerSpec::Conv {
                    kernels,
                    size,
                    padding,
                } => {
                    if flat.is_some() {
                        return Err(fail("convolution after flatten".into()));
                    }
                    if kernels == 0 || size == 0 {
                        return Err(fail("kernel count and size must be positive".into()));
                    }
                    match padding {
                        Padding::Same if size % 2 == 0 => {
                            return Err(fail(format!("same padding needs an odd kernel, got {size}")))
                        }
                        Padding::Same => {}
                        Padding::Valid if size > h || size > w => {
                            return Err(fail(format!("kernel {size} larger than input {h}x{w}")))
                        }
                        Padding::Valid => {
                            h = h - size + 1;
                            w = w - size + 1;
                        }
                    }
                    params = size * size * c * kernels;
                    c = kernels;
                }
                LayerSpec::BatchNorm => {
                    params = 2 * flat.unwrap_or(c);
                }
                LayerSpec::Relu | LayerSpec::Dropout { .. } => {
                    if let LayerSpec::Dropout { rate } = *layer {
                        if !(0.0..1.0).contains(&rate) {
                            return Err(fail(format!("dropout rate {rate} outside [0, 1)")));
                        }
                    }
                }
                LayerSpec::MaxPool { size } => {
                    if flat.is_some() {
                        return Err(fail("pooling after flatten".into()));
                    }
                    if size == 0 || size > h || size > w {
                        return Err(fail(format!("pool {size} does not fit input {h}x{w}")));
                    }
                    h /= size;
                    w /= size;
                }
                LayerSpec::Flatten => {
                    if flat.is_some() {
                        return Err(fail("already flat".into()));
                    }
                    flat = Some(h * w * c);
                }
                LayerSpec::Dense { units } => {
                    let Some(fan_in) = flat else {
                        return Err(fail("dense layer needs a flatten before it".into()));
                    };
                    if units == 0 {
                        return Err(fail("dense layer needs at least one unit".into()));
                    }
                    params = fan_in * units + units;
                    flat = Some(units);
                }
            }
            let dims = match flat {
                Some(n) => vec![n],
                None => vec![h, w, c],
            };
            out.push(LayerShape {
                index,
                name,
                output: dims,
                params,
            });
        }
        if flat != Some(1) {
            let index = self.layers.len().saturating_sub(1);
            return Err(Error::LayerSpec {
                index,
                kind: self.layers.get(index).map(|l| l.kind()).unwrap_or("output"),
                reason: "the network must end in a single output unit".into(),
            });
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.trace()?.iter().map(|l| l.params).sum())
    }
}

/// Output extent (`[H, W, C]` or `[N]`) and trainable parameter count of a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub index: usize,
    pub name: String,
    pub output: Vec<usize>,
    pub params: usize,
}

impl fmt::Display for LayerShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.output.iter().map(|d| d.to_string()).collect();
        write!(
            f,
            "{:>2} {:<9} {:>14} {:>10} params",
            self.index,
            self.name,
            dims.join("x"),
            self.params
        )
    }
}

pub fn build_model<T: Real>(spec: &ModelSpec, rng: &mut Rng) -> Result<Model<T>> {
    Model::new(spec.clone(), rng)
}
