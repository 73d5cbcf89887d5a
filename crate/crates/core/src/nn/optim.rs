use serde::{Deserialize, Serialize};

use super::{Module, ParamKind, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }
}

/// SGD with heavy-ball momentum: `v <- m v + g; p <- p - lr v`.
///
/// Velocity buffers follow the module's visit order, so one optimizer must
/// stay paired with one module.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    cfg: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        if !(cfg.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                cfg.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::Config(format!(
                "momentum {} must lie in [0, 1)",
                cfg.momentum
            )));
        }
        Ok(Self {
            cfg,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> SgdConfig {
        self.cfg
    }

    pub fn step(&mut self, module: &mut dyn Module<T>) {
        let lr = T::lit(self.cfg.learning_rate);
        let mom = T::lit(self.cfg.momentum);
        let velocity = &mut self.velocity;
        let mut slot = 0;
        module.visit("", &mut |_, t, kind| {
            if kind != ParamKind::Trainable {
                return;
            }
            let n = t.len();
            if velocity.len() == slot {
                velocity.push(vec![T::zero(); n]);
            }
            let v = &mut velocity[slot];
            assert_eq!(v.len(), n, "velocity buffer does not match parameter");
            let (p, g) = t.data_and_grad_mut();
            for ((pv, gv), vv) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vv = mom * *vv + *gv;
                *pv = *pv - lr * *vv;
            }
            slot += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{join, Tensor};

    struct One(Tensor<f64>);

    impl Module<f64> for One {
        fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<f64>, ParamKind)) {
            f(&join(prefix, "p"), &mut self.0, ParamKind::Trainable);
        }
    }

    fn with_grad(p: f64, g: f64) -> One {
        let mut t = Tensor::param([1, 1, 1, 1], vec![p]);
        t.grad_mut().unwrap()[0] = g;
        One(t)
    }

    #[test]
    fn plain_step() {
        let mut m = with_grad(1.0, 2.0);
        let mut opt = Sgd::new(SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
        })
        .unwrap();
        opt.step(&mut m);
        assert!((m.0.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut m = with_grad(3.5, 0.0);
        let mut opt = Sgd::new(SgdConfig::default()).unwrap();
        opt.step(&mut m);
        opt.step(&mut m);
        assert_eq!(m.0.data()[0], 3.5);
    }

    #[test]
    fn momentum_unrolls() {
        let (p0, g, lr) = (1.0, 0.5, 0.1);
        let mut m = with_grad(p0, g);
        let mut opt = Sgd::new(SgdConfig {
            learning_rate: lr,
            momentum: 0.9,
        })
        .unwrap();
        opt.step(&mut m);
        opt.step(&mut m);
        // v1 = g, v2 = 1.9 g
        let expect = p0 - lr * g - lr * 1.9 * g;
        assert!((m.0.data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Sgd::<f64>::new(SgdConfig {
            learning_rate: 0.0,
            momentum: 0.0
        })
        .is_err());
        assert!(Sgd::<f64>::new(SgdConfig {
            learning_rate: 0.1,
            momentum: 1.0
        })
        .is_err());
    }
}
