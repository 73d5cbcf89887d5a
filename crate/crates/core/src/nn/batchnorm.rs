use super::{join, take_cache, Mode, Module, ParamKind, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
    shape: [usize; 4],
}

/// Per-channel batch normalisation over N x H x W.
///
/// Train mode normalises with biased batch statistics and folds the unbiased
/// variance into the running estimate; eval mode uses the running estimate.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    eps: f64,
    momentum: f64,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm2d<T> {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        Self::with_options(channels, Self::EPS, Self::MOMENTUM)
    }

    pub fn with_options(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: Tensor::param([1, channels, 1, 1], vec![T::one(); channels]),
            beta: Tensor::param([1, channels, 1, 1], vec![T::zero(); channels]),
            running_mean: Tensor::zeros([1, channels, 1, 1]),
            running_var: Tensor::full([1, channels, 1, 1], T::one()),
            eps,
            momentum,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::Dimension(format!(
                "batchnorm: input {:?} has {c} channels, expected {}",
                x.shape(),
                self.channels()
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let eps = T::lit(self.eps);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        match mode {
            Mode::Train => {
                for ch in 0..c {
                    let mut s = 0.0f64;
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        s += x.data()[off..off + hw]
                            .iter()
                            .map(|v| v.as_f64())
                            .sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut ss = 0.0f64;
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        ss += x.data()[off..off + hw]
                            .iter()
                            .map(|v| (v.as_f64() - m).powi(2))
                            .sum::<f64>();
                    }
                    let v = ss / count as f64;
                    mean[ch] = T::lit(m);
                    var[ch] = T::lit(v);
                    let unbiased = if count > 1 {
                        ss / (count - 1) as f64
                    } else {
                        v
                    };
                    let mom = self.momentum;
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = T::lit((1.0 - mom) * rm.as_f64() + mom * m);
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = T::lit((1.0 - mom) * rv.as_f64() + mom * unbiased);
                }
            }
            Mode::Eval => {
                mean.copy_from_slice(self.running_mean.data());
                var.copy_from_slice(self.running_var.data());
            }
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut x_hat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
                for j in off..off + hw {
                    let xh = (x.data()[j] - mean[ch]) * inv_std[ch];
                    x_hat[j] = xh;
                    out[j] = g * xh + b;
                }
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            mode,
            shape: x.shape(),
        });
        Tensor::from_vec(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = take_cache(&mut self.cache, "batchnorm")?;
        dy.expect_shape(cache.shape, "batchnorm backward")?;
        let [n, c, h, w] = cache.shape;
        let hw = h * w;
        let m = T::lit((n * hw) as f64);
        let mut dx = vec![T::zero(); dy.len()];
        let (gamma, gamma_grad) = self.gamma.data_and_grad_mut();
        let beta_grad = self.beta.ensure_grad();
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xh = T::zero();
            for i in 0..n {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    sum_dy = sum_dy + dy.data()[j];
                    sum_dy_xh = sum_dy_xh + dy.data()[j] * cache.x_hat[j];
                }
            }
            gamma_grad[ch] = gamma_grad[ch] + sum_dy_xh;
            beta_grad[ch] = beta_grad[ch] + sum_dy;
            let g = gamma[ch];
            let is = cache.inv_std[ch];
            for i in 0..n {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    dx[j] = match cache.mode {
                        Mode::Train => {
                            g * is / m * (m * dy.data()[j] - sum_dy - cache.x_hat[j] * sum_dy_xh)
                        }
                        Mode::Eval => g * is * dy.data()[j],
                    };
                }
            }
        }
        Tensor::from_vec(cache.shape, dx)
    }
}

impl<T: Real> Module<T> for BatchNorm2d<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(
            &join(prefix, "gamma"),
            &mut self.gamma,
            ParamKind::Trainable,
        );
        f(&join(prefix, "beta"), &mut self.beta, ParamKind::Trainable);
        f(
            &join(prefix, "running_mean"),
            &mut self.running_mean,
            ParamKind::Buffer,
        );
        f(
            &join(prefix, "running_var"),
            &mut self.running_var,
            ParamKind::Buffer,
        );
    }
}
