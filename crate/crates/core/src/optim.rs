//! Parameter update rules.

use crate::error::{Error, Result};
use crate::layers::Param;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::new(0.005)
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamMoments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Real> AdamMoments<T> {
    pub fn for_param(param: &Tensor<T>) -> Self {
        Self {
            m: Tensor::zeros_like(param),
            v: Tensor::zeros_like(param),
            t: 0,
        }
    }
}

fn check_shapes<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    Ok(())
}

/// One bias-corrected Adam update. `state.t` is incremented before correction.
pub fn adam_step<T: Real>(
    params: &mut Tensor<T>,
    grads: &Tensor<T>,
    state: &mut AdamMoments<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    check_shapes("adam_step", params, grads)?;
    check_shapes("adam_step state", params, &state.m)?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 / (1.0 - cfg.beta1.powi(t));
    let c2 = 1.0 / (1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (ob1, ob2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let (c1, c2) = (T::lit(c1), T::lit(c2));
    let (eta, eps) = (T::lit(cfg.eta), T::lit(cfg.eps));
    for (((p, &g), m), v) in params
        .data_mut()
        .iter_mut()
        .zip(grads.data())
        .zip(state.m.data_mut())
        .zip(state.v.data_mut())
    {
        *m = b1 * *m + ob1 * g;
        *v = b2 * *v + ob2 * g * g;
        let m_hat = *m * c1;
        let v_hat = *v * c2;
        *p = *p - eta * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub eta: f64,
}

pub fn sgd_step<T: Real>(params: &mut Tensor<T>, grads: &Tensor<T>, cfg: &SgdConfig) -> Result<()> {
    check_shapes("sgd_step", params, grads)?;
    let eta = T::lit(cfg.eta);
    for (p, &g) in params.data_mut().iter_mut().zip(grads.data()) {
        *p = *p - eta * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        })
    }
}

/// Optimizer over a model's ordered parameter list.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Adam {
        cfg: AdamConfig,
        moments: Vec<AdamMoments<T>>,
    },
    Sgd(SgdConfig),
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("learning rate {eta} must be > 0")));
        }
        Ok(match kind {
            OptimizerKind::Adam => Optimizer::Adam {
                cfg: AdamConfig::new(eta),
                moments: Vec::new(),
            },
            OptimizerKind::Sgd => Optimizer::Sgd(SgdConfig { eta }),
        })
    }

    /// Parameters must be presented in the same order on every call.
    pub fn step(&mut self, params: Vec<Param<'_, T>>) -> Result<()> {
        match self {
            Optimizer::Adam { cfg, moments } => {
                if moments.is_empty() {
                    moments.extend(params.iter().map(|p| AdamMoments::for_param(p.value)));
                }
                if moments.len() != params.len() {
                    return Err(Error::invalid("parameter list changed between steps"));
                }
                for (p, st) in params.into_iter().zip(moments.iter_mut()) {
                    adam_step(p.value, p.grad, st, cfg)?;
                }
            }
            Optimizer::Sgd(cfg) => {
                for p in params {
                    sgd_step(p.value, p.grad, cfg)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Dist;

    fn t(v: Vec<f64>) -> Tensor<f64> {
        let n = v.len();
        Tensor::from_vec([n], v).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = t(vec![1.0, -2.0, 3.0]);
        let g = t(vec![0.0; 3]);
        let mut st = AdamMoments::for_param(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::new(0.005)).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 3.0]);
        assert_eq!(st.t, 1);
        sgd_step(&mut p, &g, &SgdConfig { eta: 0.1 }).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_eta() {
        let mut p = t(vec![0.0, 0.0]);
        let g = t(vec![3.0, -0.2]);
        let mut st = AdamMoments::for_param(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::new(0.005)).unwrap();
        assert!((p.data()[0] + 0.005).abs() < 1e-9);
        assert!((p.data()[1] - 0.005).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut w = t(vec![1.0]);
        let mut st = AdamMoments::for_param(&w);
        let cfg = AdamConfig::new(0.1);
        for _ in 0..200 {
            let g = t(vec![2.0 * w.data()[0]]);
            adam_step(&mut w, &g, &mut st, &cfg).unwrap();
        }
        assert!(w.data()[0].abs() < 0.05, "w = {}", w.data()[0]);
    }

    #[test]
    fn sgd_arithmetic() {
        let mut p = t(vec![1.0]);
        sgd_step(&mut p, &t(vec![2.0]), &SgdConfig { eta: 0.1 }).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_without_moments_is_sign_sgd() {
        let mut rng = Rng::new(6);
        let cfg = AdamConfig {
            eta: 0.01,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-300,
        };
        let d = Dist::Uniform { lo: -1.0, hi: 1.0 };
        let mut p = Tensor::<f64>::random([50], d, &mut rng).unwrap();
        let mut st = AdamMoments::for_param(&p);
        for _ in 0..3 {
            let g = Tensor::random([50], d, &mut rng).unwrap();
            let before = p.clone();
            adam_step(&mut p, &g, &mut st, &cfg).unwrap();
            for ((a, b), gi) in p.data().iter().zip(before.data()).zip(g.data()) {
                assert!((a - (b - 0.01 * gi.signum())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_direction_as_sgd() {
        let mut rng = Rng::new(9);
        let d = Dist::Uniform { lo: -1.0, hi: 1.0 };
        let p0 = Tensor::<f64>::random([20], d, &mut rng).unwrap();
        let g = Tensor::random([20], d, &mut rng).unwrap();
        let (mut a, mut s) = (p0.clone(), p0.clone());
        adam_step(&mut a, &g, &mut AdamMoments::for_param(&p0), &AdamConfig::new(0.01)).unwrap();
        sgd_step(&mut s, &g, &SgdConfig { eta: 0.01 }).unwrap();
        for ((a, s), p) in a.data().iter().zip(s.data()).zip(p0.data()) {
            assert_eq!((a - p).signum(), (s - p).signum());
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = t(vec![1.0, 2.0]);
        let g = t(vec![1.0]);
        assert!(sgd_step(&mut p, &g, &SgdConfig { eta: 0.1 }).is_err());
        let mut st = AdamMoments::for_param(&p);
        assert!(adam_step(&mut p, &g, &mut st, &AdamConfig::default()).is_err());
    }
}
