//! Central finite-difference checks for every layer and the tiny network.

use lcnn::layers::{BatchNorm, Conv2d, Dense, Dropout, MaxPool2d, Mode, Padding, Relu};
use lcnn::loss::bce_with_logits;
use lcnn::model::{Model, ModelSpec};
use lcnn::{Dist, Rng, Tensor};

pub const H: f64 = 1e-6;

/// `||a - n|| / (||a|| + ||n||)`, zero when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + H;
            let up = f(&v);
            v[i] = orig - H;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn dot(a: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    a.data().iter().zip(r.data()).map(|(x, y)| x * y).sum()
}

fn normal(dims: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::random(dims.to_vec(), Dist::Normal { mean: 0.0, std_dev: 1.0 }, rng).unwrap()
}

fn with(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.dims().to_vec(), data.to_vec()).unwrap()
}

/// Worst of (input, kernel) relative errors for a random conv instance.
pub fn conv(seed: u64, padding: Padding) -> f64 {
    let mut rng = Rng::new(seed);
    let (b, h, w, cin, cout) = (2, 5 + rng.below(3), 4 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3));
    let k = [1, 3, 3][rng.below(3)];
    let x = normal(&[b, h, w, cin], &mut rng);
    let kern = normal(&[k, k, cin, cout], &mut rng);
    let mut layer = Conv2d::from_kernels(kern.clone(), padding).unwrap();
    let y = layer.forward(&x).unwrap();
    let r = normal(y.dims(), &mut rng);
    let dx = layer.backward(&r).unwrap();
    let nx = numeric_grad(x.data(), |v| dot(&layer.infer(&with(&x, v)).unwrap(), &r));
    let nk = numeric_grad(kern.data(), |v| {
        dot(&Conv2d::from_kernels(with(&kern, v), padding).unwrap().infer(&x).unwrap(), &r)
    });
    rel_err(dx.data(), &nx).max(rel_err(layer.grad_kernels().data(), &nk))
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (b, fi, fo) = (3, 2 + rng.below(6), 1 + rng.below(5));
    let x = normal(&[b, fi], &mut rng);
    let wt = normal(&[fi, fo], &mut rng);
    let bias = normal(&[fo], &mut rng);
    let mut layer = Dense::from_parts(wt.clone(), bias.clone()).unwrap();
    let y = layer.forward(&x).unwrap();
    let r = normal(y.dims(), &mut rng);
    let dx = layer.backward(&r).unwrap();
    let nx = numeric_grad(x.data(), |v| dot(&layer.infer(&with(&x, v)).unwrap(), &r));
    let nw = numeric_grad(wt.data(), |v| {
        dot(&Dense::from_parts(with(&wt, v), bias.clone()).unwrap().infer(&x).unwrap(), &r)
    });
    let nb = numeric_grad(bias.data(), |v| {
        dot(&Dense::from_parts(wt.clone(), with(&bias, v)).unwrap().infer(&x).unwrap(), &r)
    });
    rel_err(dx.data(), &nx)
        .max(rel_err(layer.grad_weights().data(), &nw))
        .max(rel_err(layer.grad_bias().data(), &nb))
}

/// Batch norm in train mode (batch statistics) or eval mode (random running
/// statistics). Checks input, gamma and beta gradients.
pub fn batchnorm(seed: u64, mode: Mode) -> f64 {
    let mut rng = Rng::new(seed);
    let c = 1 + rng.below(4);
    let x = normal(&[3, 2, 3, c], &mut rng);
    let gamma = normal(&[c], &mut rng);
    let beta = normal(&[c], &mut rng);
    let rmean = normal(&[c], &mut rng);
    let rvar = Tensor::random([c], Dist::Uniform { lo: 0.5, hi: 2.0 }, &mut rng).unwrap();
    let build = |g: &Tensor<f64>, b: &Tensor<f64>| {
        let mut bn = BatchNorm::<f64>::new(c).unwrap();
        *bn.gamma_mut() = g.clone();
        *bn.beta_mut() = b.clone();
        let (m, v) = bn.running_mut();
        *m = rmean.clone();
        *v = rvar.clone();
        bn
    };
    let run = |bn: &mut BatchNorm<f64>, x: &Tensor<f64>| bn.forward(x, mode).unwrap();
    let mut layer = build(&gamma, &beta);
    let y = run(&mut layer, &x);
    let r = normal(y.dims(), &mut rng);
    let dx = layer.backward(&r).unwrap();
    let nx = numeric_grad(x.data(), |v| dot(&run(&mut build(&gamma, &beta), &with(&x, v)), &r));
    let ng = numeric_grad(gamma.data(), |v| dot(&run(&mut build(&with(&gamma, v), &beta), &x), &r));
    let nb = numeric_grad(beta.data(), |v| dot(&run(&mut build(&gamma, &with(&beta, v)), &x), &r));
    rel_err(dx.data(), &nx)
        .max(rel_err(layer.grad_gamma().data(), &ng))
        .max(rel_err(layer.grad_beta().data(), &nb))
}

/// Values at least 0.05 away from zero.
fn gated_input(dims: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(0.05, 1.0);
            if rng.unit() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::from_vec(dims.to_vec(), data).unwrap()
}

/// ReLU backward must equal the gated upstream gradient bit for bit, and agree
/// with finite differences.
pub fn relu(seed: u64) -> (bool, f64) {
    let mut rng = Rng::new(seed);
    let x = gated_input(&[2, 3, 4, 2], &mut rng);
    let mut layer = Relu::new();
    let y = layer.forward(&x);
    let r = normal(y.dims(), &mut rng);
    let dx = layer.backward(&r).unwrap();
    let exact = x
        .data()
        .iter()
        .zip(r.data())
        .zip(dx.data())
        .all(|((&xi, &ri), &di)| di == if xi > 0.0 { ri } else { 0.0 });
    let n = numeric_grad(x.data(), |v| dot(&layer.infer(&with(&x, v)), &r));
    (exact, rel_err(dx.data(), &n))
}

/// Max pooling on distinct values: the gradient lands exactly on each
/// window's maximum.
pub fn maxpool(seed: u64) -> (bool, f64) {
    let mut rng = Rng::new(seed);
    let (b, h, w, c) = (2, 4 + rng.below(4), 4 + rng.below(4), 1 + rng.below(3));
    let p = 2 + rng.below(2);
    let n = b * h * w * c;
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    rng.shuffle(&mut vals);
    let x = Tensor::from_vec([b, h, w, c], vals).unwrap();
    let mut layer = MaxPool2d::new(p, p).unwrap();
    let y = layer.forward(&x).unwrap();
    let r = normal(y.dims(), &mut rng);
    let dx = layer.backward(&r).unwrap();
    let (oh, ow) = (h / p, w / p);
    let mut expect = vec![0.0; n];
    for bi in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let idx = |di: usize, dj: usize| ((bi * h + i * p + di) * w + j * p + dj) * c + ch;
                    let best = (0..p * p)
                        .map(|k| idx(k / p, k % p))
                        .max_by(|&a, &b| x.data()[a].total_cmp(&x.data()[b]))
                        .unwrap();
                    expect[best] += r.data()[((bi * oh + i) * ow + j) * c + ch];
                }
            }
        }
    }
    let exact = dx.data() == expect.as_slice();
    let num = numeric_grad(x.data(), |v| dot(&layer.infer(&with(&x, v)).unwrap(), &r));
    (exact, rel_err(dx.data(), &num))
}

/// Dropout backward multiplies by the forward mask exactly.
pub fn dropout(seed: u64) -> bool {
    let mut rng = Rng::new(seed);
    let x = gated_input(&[4, 16], &mut rng);
    let mut layer = Dropout::<f64>::new(0.5).unwrap();
    let mut mask_rng = Rng::new(seed ^ 0xd5);
    let y = layer.forward(&x, Mode::Train, &mut mask_rng);
    let r = normal(y.dims(), &mut rng);
    let dx = layer.backward(&r).unwrap();
    // Survivors are scaled by 2; dropped units pass no gradient.
    let dropped_some = y.data().contains(&0.0);
    let exact = x
        .data()
        .iter()
        .zip(y.data())
        .zip(r.data().iter().zip(dx.data()))
        .all(|((&xi, &yi), (&ri, &di))| if yi == 0.0 { di == 0.0 } else { yi == 2.0 * xi && di == 2.0 * ri });
    exact && dropped_some
}

/// Every parameter and the input of the tiny network (eval mode: dropout off,
/// batch norm frozen at random running statistics) against finite
/// differences of the batch-mean BCE.
pub fn tiny_network(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut model = Model::<f64>::new(ModelSpec::tiny(), &mut rng).unwrap();
    // Non-trivial batch norm state.
    let names: Vec<(String, Vec<usize>)> = model
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.dims().to_vec()))
        .collect();
    let entries = names
        .into_iter()
        .map(|(n, dims)| {
            let t = if n.ends_with("running_var") {
                Tensor::random(dims, Dist::Uniform { lo: 0.5, hi: 1.5 }, &mut rng).unwrap()
            } else if n.ends_with("running_mean") || n.ends_with("beta") {
                Tensor::random(dims, Dist::Normal { mean: 0.0, std_dev: 0.3 }, &mut rng).unwrap()
            } else if n.ends_with("gamma") {
                Tensor::random(dims, Dist::Uniform { lo: 0.5, hi: 1.5 }, &mut rng).unwrap()
            } else {
                model.named_tensors().into_iter().find(|(m, _)| *m == n).unwrap().1.clone()
            };
            (n, t)
        })
        .collect();
    model.load_named(entries).unwrap();

    let x = Tensor::<f64>::random([3, 8, 8, 1], Dist::Uniform { lo: 0.0, hi: 1.0 }, &mut rng).unwrap();
    let labels = [1.0, 0.0, 1.0];
    let loss = |m: &Model<f64>, x: &Tensor<f64>| bce_with_logits(&labels, &m.infer(x).unwrap()).unwrap().value;

    model.zero_grad();
    let logits = model.forward(&x, Mode::Eval).unwrap();
    let l = bce_with_logits(&labels, &logits).unwrap();
    let dx = model.backward(&l.grad_wrt_logit).unwrap();
    let mut worst = rel_err(dx.data(), &numeric_grad(x.data(), |v| loss(&model, &with(&x, v))));

    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data().to_vec()).collect();
    for (pi, grad) in analytic.iter().enumerate() {
        let base = model.params()[pi].value.data().to_vec();
        let mut probe = model.clone();
        let num = numeric_grad(&base, |v| {
            probe.params()[pi].value.data_mut().copy_from_slice(v);
            loss(&probe, &x)
        });
        worst = worst.max(rel_err(grad, &num));
    }
    worst
}
