use crate::error::{Error, Result};
use crate::layers::{BatchNorm, Conv2d, Dense, Dropout, MaxPool2d, Mode, Param, Relu};
use crate::loss::sigmoid_scalar;
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::spec::{LayerShape, LayerSpec, ModelSpec};

#[derive(Debug, Clone)]
enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu(Relu<T>),
    MaxPool(MaxPool2d),
    Flatten(Option<Vec<usize>>),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    name: String,
    layer: Layer<T>,
}

/// Parameter and running-statistic values, in [`Model::named_tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T>(pub Vec<Tensor<T>>);

/// A built network: layers in order, ending in a single logit.
#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    shapes: Vec<LayerShape>,
    nodes: Vec<Node<T>>,
    dropout_rng: Rng,
}

impl<T: Real> Model<T> {
    /// Validate `spec` and initialize every layer from `rng`.
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.trace()?;
        let mut nodes = Vec::with_capacity(spec.layers.len());
        let mut channels = spec.input_channels;
        for (layer, shape) in spec.layers.iter().zip(&shapes) {
            let built = match *layer {
                LayerSpec::Conv {
                    kernels,
                    size,
                    padding,
                } => Layer::Conv(Conv2d::new(size, size, channels, kernels, padding, rng)?),
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(*shape.output.last().unwrap())?),
                LayerSpec::Relu => Layer::Relu(Relu::new()),
                LayerSpec::MaxPool { size } => Layer::MaxPool(MaxPool2d::new(size, size)?),
                LayerSpec::Flatten => Layer::Flatten(None),
                LayerSpec::Dense { units } => Layer::Dense(Dense::new(channels, units, rng)?),
                LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)?),
            };
            channels = *shape.output.last().unwrap();
            nodes.push(Node {
                name: shape.name.clone(),
                layer: built,
            });
        }
        Ok(Self {
            dropout_rng: rng.child("dropout"),
            spec,
            shapes,
            nodes,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.shapes.iter().map(|s| s.params).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (h, w) = self.spec.input_hw;
        match x.dims() {
            &[_, xh, xw, xc] if xh == h && xw == w && xc == self.spec.input_channels => Ok(()),
            _ => Err(Error::ShapeMismatch {
                op: "model input",
                left: x.dims().to_vec(),
                right: vec![0, h, w, self.spec.input_channels],
            }),
        }
    }

    /// Logits `B x 1`, caching everything needed by [`Model::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for node in &mut self.nodes {
            a = match &mut node.layer {
                Layer::Conv(l) => l.forward(&a)?,
                Layer::BatchNorm(l) => l.forward(&a, mode)?,
                Layer::Relu(l) => l.forward(&a),
                Layer::MaxPool(l) => l.forward(&a)?,
                Layer::Flatten(cache) => {
                    *cache = Some(a.dims().to_vec());
                    let b = a.dims()[0];
                    let n = a.len() / b;
                    a.reshape([b, n])?
                }
                Layer::Dense(l) => l.forward(&a)?,
                Layer::Dropout(l) => l.forward(&a, mode, &mut self.dropout_rng),
            };
        }
        Ok(a)
    }

    /// Eval-mode logits without touching any cache.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for node in &self.nodes {
            a = match &node.layer {
                Layer::Conv(l) => l.infer(&a)?,
                Layer::BatchNorm(l) => l.infer(&a)?,
                Layer::Relu(l) => l.infer(&a),
                Layer::MaxPool(l) => l.infer(&a)?,
                Layer::Flatten(_) => {
                    let b = a.dims()[0];
                    let n = a.len() / b;
                    a.reshape([b, n])?
                }
                Layer::Dense(l) => l.infer(&a)?,
                Layer::Dropout(_) => a,
            };
        }
        Ok(a)
    }

    /// Eval-mode tumor probabilities, one per sample.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<f64>> {
        Ok(self
            .infer(x)?
            .data()
            .iter()
            .map(|z| sigmoid_scalar(z.as_f64()))
            .collect())
    }

    /// Backpropagate `d loss / d logits`, accumulating parameter gradients.
    /// Returns the gradient with respect to the model input.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_impl(grad_logits, true)
            .map(|g| g.expect("input gradient requested"))
    }

    /// Like [`Model::backward`] but skips the first layer's input gradient.
    pub fn backward_params(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        self.backward_impl(grad_logits, false).map(|_| ())
    }

    fn backward_impl(&mut self, grad_logits: &Tensor<T>, want_input: bool) -> Result<Option<Tensor<T>>> {
        let mut g = grad_logits.clone();
        for (i, node) in self.nodes.iter_mut().enumerate().rev() {
            if i == 0 && !want_input {
                if let Layer::Conv(l) = &mut node.layer {
                    l.backward_kernels_only(&g)?;
                    return Ok(None);
                }
            }
            g = match &mut node.layer {
                Layer::Conv(l) => l.backward(&g)?,
                Layer::BatchNorm(l) => l.backward(&g)?,
                Layer::Relu(l) => l.backward(&g)?,
                Layer::MaxPool(l) => l.backward(&g)?,
                Layer::Flatten(cache) => {
                    let dims = cache.clone().ok_or(Error::MissingCache("flatten backward"))?;
                    g.reshape(dims)?
                }
                Layer::Dense(l) => l.backward(&g)?,
                Layer::Dropout(l) => l.backward(&g)?,
            };
        }
        Ok(Some(g))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            match &mut node.layer {
                Layer::Conv(l) => l.zero_grad(),
                Layer::BatchNorm(l) => l.zero_grad(),
                Layer::Dense(l) => l.zero_grad(),
                _ => {}
            }
        }
    }

    /// Drop forward caches (activations) to release memory.
    pub fn clear_caches(&mut self) {
        for node in &mut self.nodes {
            match &mut node.layer {
                Layer::Conv(l) => l.clear_cache(),
                Layer::BatchNorm(l) => l.clear_cache(),
                Layer::Relu(l) => l.clear_cache(),
                Layer::MaxPool(l) => l.clear_cache(),
                Layer::Flatten(c) => *c = None,
                Layer::Dense(l) => l.clear_cache(),
                Layer::Dropout(l) => l.clear_cache(),
            }
        }
    }

    /// Trainable parameters with their gradients, in a fixed order.
    pub fn params(&mut self) -> Vec<Param<'_, T>> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            match &mut node.layer {
                Layer::Conv(l) => out.extend(l.params()),
                Layer::BatchNorm(l) => out.extend(l.params()),
                Layer::Dense(l) => out.extend(l.params()),
                _ => {}
            }
        }
        out
    }

    /// Every persisted tensor (parameters and batch-norm running statistics)
    /// with its qualified name, e.g. `conv1.kernels` or `bn2.running_var`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            let n = &node.name;
            match &node.layer {
                Layer::Conv(l) => out.push((format!("{n}.kernels"), l.kernels())),
                Layer::BatchNorm(l) => {
                    out.push((format!("{n}.gamma"), l.gamma()));
                    out.push((format!("{n}.beta"), l.beta()));
                    out.push((format!("{n}.running_mean"), l.running_mean()));
                    out.push((format!("{n}.running_var"), l.running_var()));
                }
                Layer::Dense(l) => {
                    out.push((format!("{n}.weights"), l.weights()));
                    out.push((format!("{n}.bias"), l.bias()));
                }
                _ => {}
            }
        }
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            let n = node.name.clone();
            match &mut node.layer {
                Layer::Conv(l) => out.push((format!("{n}.kernels"), l.kernels_mut())),
                Layer::BatchNorm(l) => {
                    let [g, b, m, v] = l.state_mut();
                    out.push((format!("{n}.gamma"), g));
                    out.push((format!("{n}.beta"), b));
                    out.push((format!("{n}.running_mean"), m));
                    out.push((format!("{n}.running_var"), v));
                }
                Layer::Dense(l) => {
                    for p in l.params() {
                        out.push((format!("{n}.{}", p.name), p.value));
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Replace tensor values by name. Every model tensor must be present with
    /// identical extents.
    pub fn load_named(&mut self, mut entries: Vec<(String, Tensor<T>)>) -> Result<()> {
        let targets = self.named_tensors_mut();
        if entries.len() != targets.len() {
            return Err(Error::WeightMismatch(format!(
                "file holds {} tensors, model expects {}",
                entries.len(),
                targets.len()
            )));
        }
        for (name, slot) in targets {
            let pos = entries
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::WeightMismatch(format!("tensor `{name}` missing from file")))?;
            let (_, t) = entries.swap_remove(pos);
            if t.dims() != slot.dims() {
                return Err(Error::WeightMismatch(format!(
                    "layer `{name}`: file has {:?}, model expects {:?}",
                    t.dims(),
                    slot.dims()
                )));
            }
            *slot = t;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot<T> {
        Snapshot(self.named_tensors().into_iter().map(|(_, t)| t.clone()).collect())
    }

    pub fn restore(&mut self, snap: &Snapshot<T>) -> Result<()> {
        let names: Vec<String> = self.named_tensors().into_iter().map(|(n, _)| n).collect();
        self.load_named(names.into_iter().zip(snap.0.iter().cloned()).collect())
    }

    /// L2 norm of every parameter tensor, for diagnostics.
    pub fn param_norms(&self) -> Vec<(String, f64)> {
        self.named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.l2_norm()))
            .collect()
    }
}
