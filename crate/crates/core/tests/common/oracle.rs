//! Naive reference implementations.

use lcnn::layers::{Conv2d, MaxPool2d, Padding};
use lcnn::model::ConfusionMatrix;
use lcnn::{Dist, Rng, Tensor};

/// Direct sliding-window convolution, zero padding, stride 1.
pub fn conv2d(x: &Tensor<f64>, k: &Tensor<f64>, padding: Padding) -> Tensor<f64> {
    let &[b, h, w, cin] = x.dims() else { panic!("rank 4") };
    let &[kh, kw, _, cout] = k.dims() else { panic!("rank 4") };
    let (ph, pw, oh, ow) = match padding {
        Padding::Same => ((kh - 1) / 2, (kw - 1) / 2, h, w),
        Padding::Valid => (0, 0, h - kh + 1, w - kw + 1),
    };
    let mut out = vec![0.0; b * oh * ow * cout];
    for n in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for s in 0..cout {
                    let mut acc = 0.0;
                    for di in 0..kh {
                        for dj in 0..kw {
                            let (y, xx) = ((i + di) as isize - ph as isize, (j + dj) as isize - pw as isize);
                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                continue;
                            }
                            for c in 0..cin {
                                acc += k.get(&[di, dj, c, s]).unwrap()
                                    * x.get(&[n, y as usize, xx as usize, c]).unwrap();
                            }
                        }
                    }
                    out[((n * oh + i) * ow + j) * cout + s] = acc;
                }
            }
        }
    }
    Tensor::from_vec([b, oh, ow, cout], out).unwrap()
}

/// Non-overlapping max pooling with floor on the output extent.
pub fn maxpool(x: &Tensor<f64>, p: usize) -> Tensor<f64> {
    let &[b, h, w, c] = x.dims() else { panic!("rank 4") };
    let (oh, ow) = (h / p, w / p);
    let mut out = Vec::new();
    for n in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut m = f64::NEG_INFINITY;
                    for di in 0..p {
                        for dj in 0..p {
                            m = m.max(x.get(&[n, i * p + di, j * p + dj, ch]).unwrap());
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    Tensor::from_vec([b, oh, ow, c], out).unwrap()
}

/// Rates by counting over explicit per-sample outcomes.
pub struct BruteRates {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

pub fn brute_rates(predicted: &[bool], actual: &[bool]) -> BruteRates {
    let n = predicted.len();
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    let pos: Vec<bool> = actual.iter().zip(predicted).filter(|(a, _)| **a).map(|(_, p)| *p).collect();
    let neg: Vec<bool> = actual.iter().zip(predicted).filter(|(a, _)| !**a).map(|(_, p)| *p).collect();
    let flagged: Vec<bool> = predicted.iter().zip(actual).filter(|(p, _)| **p).map(|(_, a)| *a).collect();
    let frac = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let recall = frac(pos.iter().filter(|p| **p).count(), pos.len());
    let specificity = frac(neg.iter().filter(|p| !**p).count(), neg.len());
    let precision = frac(flagged.iter().filter(|a| **a).count(), flagged.len());
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    BruteRates {
        accuracy: frac(hits, n),
        recall,
        specificity,
        precision,
        f1,
    }
}

/// Expand confusion counts into per-sample outcome vectors.
pub fn expand(m: &ConfusionMatrix) -> (Vec<bool>, Vec<bool>) {
    let mut p = Vec::new();
    let mut a = Vec::new();
    for (count, pred, act) in [
        (m.true_pos, true, true),
        (m.true_neg, false, false),
        (m.false_pos, true, false),
        (m.false_neg, false, true),
    ] {
        p.extend(std::iter::repeat_n(pred, count));
        a.extend(std::iter::repeat_n(act, count));
    }
    (p, a)
}

/// Small-integer tensors make every partial sum exact, so any summation order
/// must give identical bits.
pub fn int_tensor(dims: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    Tensor::from_vec(dims.to_vec(), (0..n).map(|_| rng.int_in(-8, 8) as f64).collect()).unwrap()
}

/// Random small conv instances, alternating same and valid padding.
/// Returns the indices of instances whose output differs from [`conv2d`].
pub fn conv_mismatches(cases: usize, seed: u64) -> Vec<usize> {
    let mut rng = Rng::new(seed);
    let mut bad = Vec::new();
    for case in 0..cases {
        let (b, h, w) = (1 + rng.below(3), 3 + rng.below(8), 3 + rng.below(8));
        let (cin, cout) = (1 + rng.below(4), 1 + rng.below(4));
        let padding = if case % 2 == 0 { Padding::Same } else { Padding::Valid };
        let k = match padding {
            Padding::Same => 1 + 2 * rng.below(3),
            Padding::Valid => 1 + rng.below(h.min(w)),
        };
        let x = int_tensor(&[b, h, w, cin], &mut rng);
        let kern = int_tensor(&[k, k, cin, cout], &mut rng);
        let got = Conv2d::from_kernels(kern.clone(), padding).unwrap().infer(&x).unwrap();
        if got != conv2d(&x, &kern, padding) {
            bad.push(case);
        }
    }
    bad
}

pub fn maxpool_mismatches(cases: usize, seed: u64) -> Vec<usize> {
    let mut rng = Rng::new(seed);
    let mut bad = Vec::new();
    for case in 0..cases {
        let p = 1 + rng.below(4);
        let (b, h, w, c) = (1 + rng.below(3), p + rng.below(9), p + rng.below(9), 1 + rng.below(4));
        let x = Tensor::<f64>::random([b, h, w, c], Dist::Uniform { lo: -1.0, hi: 1.0 }, &mut rng).unwrap();
        let got = MaxPool2d::new(p, p).unwrap().infer(&x).unwrap();
        if got != maxpool(&x, p) {
            bad.push(case);
        }
    }
    bad
}

pub fn random_matrix(rng: &mut Rng) -> ConfusionMatrix {
    let mut count = || if rng.unit() < 0.1 { 0 } else { rng.below(60) };
    ConfusionMatrix {
        true_pos: count(),
        true_neg: count(),
        false_pos: count(),
        false_neg: count(),
    }
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

/// Random confusion matrices checked against per-sample counting. Returns the
/// number of matrices where any rate disagrees.
pub fn metric_mismatches(cases: usize, seed: u64) -> usize {
    let mut rng = Rng::new(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let m = random_matrix(&mut rng);
        let (pred, act) = expand(&m);
        let probs: Vec<f64> = pred.iter().map(|&p| if p { 0.9 } else { 0.1 }).collect();
        let labels: Vec<f64> = act.iter().map(|&a| a as u8 as f64).collect();
        let b = brute_rates(&pred, &act);
        let mut ok = ConfusionMatrix::from_predictions(&probs, &labels, 0.5) == m
            && close(m.accuracy(), b.accuracy)
            && close(m.recall(), b.recall)
            && close(m.specificity(), b.specificity)
            && close(m.precision(), b.precision)
            && close(m.f1(), b.f1);
        if let (Some(acc), Some(r), Some(s)) = (m.accuracy(), m.recall(), m.specificity()) {
            let (p, n) = (m.positives() as f64, m.negatives() as f64);
            ok &= (acc - (r * p + s * n) / (p + n)).abs() <= 1e-12;
        }
        bad += usize::from(!ok);
    }
    bad
}
