use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    add, broadcast_mul_channel, broadcast_mul_channel_backward, join, take_cache, GlobalAvgPool,
    Linear, Mode, Module, ParamKind, Real, Relu, Sigmoid, Tensor,
};

/// Squeeze-and-excitation: per-channel gates
/// `s = sigmoid(W2 relu(W1 gap(x)))` rescale the input map.
#[derive(Debug, Clone)]
pub struct SqueezeExcitation<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pool: GlobalAvgPool,
    relu: Relu<T>,
    sigmoid: Sigmoid<T>,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> SqueezeExcitation<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Self {
            fc1: Linear::new(rng, channels, hidden),
            fc2: Linear::new(rng, hidden, channels),
            pool: GlobalAvgPool::new(),
            relu: Relu::new(),
            sigmoid: Sigmoid::new(),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.fc1.inputs()
    }

    pub fn bottleneck(&self) -> usize {
        self.fc1.outputs()
    }

    /// Per-channel gates of the most recent forward pass (N x C x 1 x 1).
    pub fn last_gates(&self) -> Option<&Tensor<T>> {
        self.cache.as_ref().map(|(_, s)| s)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.c() != self.channels() {
            return Err(Error::Dimension(format!(
                "SE block: input {:?} has {} channels, expected {}",
                x.shape(),
                x.c(),
                self.channels()
            )));
        }
        let z = self.pool.forward(x);
        let h = self.fc1.forward(&z, mode)?;
        let a = self.relu.forward(&h);
        let u = self.fc2.forward(&a, mode)?;
        let s = self.sigmoid.forward(&u);
        let y = broadcast_mul_channel(x, &s)?;
        self.cache = Some((x.clone(), s));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, s) = take_cache(&mut self.cache, "SE block")?;
        let (dx_direct, ds) = broadcast_mul_channel_backward(&x, &s, dy)?;
        let du = self.sigmoid.backward(&ds)?;
        let da = self.fc2.backward(&du)?;
        let dh = self.relu.backward(&da)?;
        let dz = self.fc1.backward(&dh)?;
        let dx_pool = self.pool.backward(&dz)?;
        add(&dx_direct, &dx_pool)
    }
}

impl<T: Real> Module<T> for SqueezeExcitation<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
}
