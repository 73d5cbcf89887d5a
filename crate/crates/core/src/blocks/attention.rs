//! Multi-scale channel attention and attentional feature fusion.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    add, global_avg_pool, global_avg_pool_backward, join, sigmoid, take_cache, BatchNorm2d, Conv2d,
    Mode, Module, Padding, ParamKind, Real, Relu, Tensor,
};

/// Pointwise channel bottleneck `C -> C/r -> C` with batch-norm after each
/// convolution and a ReLU between them.
#[derive(Debug, Clone)]
pub struct ChannelBottleneck<T> {
    pub reduce: Conv2d<T>,
    pub bn_reduce: BatchNorm2d<T>,
    relu: Relu<T>,
    pub expand: Conv2d<T>,
    pub bn_expand: BatchNorm2d<T>,
}

impl<T: Real> ChannelBottleneck<T> {
    fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, hidden: usize) -> Self {
        Self {
            reduce: Conv2d::new(rng, channels, hidden, (1, 1), 1, Padding::Valid, false),
            bn_reduce: BatchNorm2d::new(hidden),
            relu: Relu::new(),
            expand: Conv2d::new(rng, hidden, channels, (1, 1), 1, Padding::Valid, false),
            bn_expand: BatchNorm2d::new(channels),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.reduce.forward(x, mode)?;
        let h = self.bn_reduce.forward(&h, mode)?;
        let h = self.relu.forward(&h);
        let h = self.expand.forward(&h, mode)?;
        self.bn_expand.forward(&h, mode)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.bn_expand.backward(dy)?;
        let g = self.expand.backward(&g)?;
        let g = self.relu.backward(&g)?;
        let g = self.bn_reduce.backward(&g)?;
        self.reduce.backward(&g)
    }
}

impl<T: Real> Module<T> for ChannelBottleneck<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        self.bn_reduce.visit(&join(prefix, "bn_reduce"), f);
        self.expand.visit(&join(prefix, "expand"), f);
        self.bn_expand.visit(&join(prefix, "bn_expand"), f);
    }
}

#[derive(Debug, Clone)]
struct MsCamCache<T> {
    in_shape: [usize; 4],
    gate: Tensor<T>,
}

/// Multi-scale channel attention: `M(x) = sigmoid(L(x) + G(x))` where the
/// global branch `G` applies a channel bottleneck to the pooled descriptor
/// and the local branch `L` applies one at every position.
#[derive(Debug, Clone)]
pub struct MsCam<T> {
    pub global: ChannelBottleneck<T>,
    pub local: ChannelBottleneck<T>,
    channels: usize,
    cache: Option<MsCamCache<T>>,
}

impl<T: Real> MsCam<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Self {
            global: ChannelBottleneck::new(rng, channels, hidden),
            local: ChannelBottleneck::new(rng, channels, hidden),
            channels,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bottleneck(&self) -> usize {
        self.local.reduce.out_channels()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.c() != self.channels {
            return Err(Error::Dimension(format!(
                "MS-CAM: input {:?} has {} channels, expected {}",
                x.shape(),
                x.c(),
                self.channels
            )));
        }
        let g = self.global.forward(&global_avg_pool(x), mode)?;
        let mut l = self.local.forward(x, mode)?;
        let hw = x.h() * x.w();
        for (plane, &gv) in l.data_mut().chunks_exact_mut(hw).zip(g.data()) {
            plane.iter_mut().for_each(|v| *v = *v + gv);
        }
        let gate = sigmoid(&l);
        self.cache = Some(MsCamCache {
            in_shape: x.shape(),
            gate: gate.clone(),
        });
        Ok(gate)
    }

    pub fn backward(&mut self, dgate: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = take_cache(&mut self.cache, "MS-CAM")?;
        dgate.expect_shape(cache.in_shape, "MS-CAM backward")?;
        let [n, c, h, w] = cache.in_shape;
        let hw = h * w;
        let du_data: Vec<T> = cache
            .gate
            .data()
            .iter()
            .zip(dgate.data())
            .map(|(&m, &g)| g * m * (T::one() - m))
            .collect();
        let dg_data = du_data
            .chunks_exact(hw)
            .map(|p| p.iter().copied().sum())
            .collect();
        let du = Tensor::from_vec(cache.in_shape, du_data)?;
        let dg = Tensor::from_vec([n, c, 1, 1], dg_data)?;
        let dx_local = self.local.backward(&du)?;
        let dpooled = self.global.backward(&dg)?;
        let dx_global = global_avg_pool_backward(cache.in_shape, &dpooled)?;
        add(&dx_local, &dx_global)
    }
}

impl<T: Real> Module<T> for MsCam<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.global.visit(&join(prefix, "global"), f);
        self.local.visit(&join(prefix, "local"), f);
    }
}

#[derive(Debug, Clone)]
struct AffCache<T> {
    x: Tensor<T>,
    y: Tensor<T>,
    gate: Tensor<T>,
}

/// Attentional feature fusion: `z = M(x + y) * x + (1 - M(x + y)) * y`.
///
/// Evaluated as `y + M * (x - y)`, so `fuse(x, x)` returns `x` bit for bit.
#[derive(Debug, Clone)]
pub struct AttentionalFusion<T> {
    pub mscam: MsCam<T>,
    cache: Option<AffCache<T>>,
}

impl<T: Real> AttentionalFusion<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, reduction: usize) -> Self {
        Self {
            mscam: MsCam::new(rng, channels, reduction),
            cache: None,
        }
    }

    pub fn last_gate(&self) -> Option<&Tensor<T>> {
        self.cache.as_ref().map(|c| &c.gate)
    }

    pub fn forward(&mut self, x: &Tensor<T>, y: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!(
                "AFF: operands {:?} and {:?} differ",
                x.shape(),
                y.shape()
            )));
        }
        let gate = self.mscam.forward(&add(x, y)?, mode)?;
        let z = x
            .data()
            .iter()
            .zip(y.data())
            .zip(gate.data())
            .map(|((&a, &b), &m)| b + m * (a - b))
            .collect();
        self.cache = Some(AffCache {
            x: x.clone(),
            y: y.clone(),
            gate,
        });
        Tensor::from_vec(x.shape(), z)
    }

    /// Returns `(dx, dy)`.
    pub fn backward(&mut self, dz: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let c = take_cache(&mut self.cache, "AFF")?;
        dz.expect_shape(c.x.shape(), "AFF backward")?;
        let shape = c.x.shape();
        let len = c.x.len();
        let mut dx = Vec::with_capacity(len);
        let mut dy = Vec::with_capacity(len);
        let mut dm = Vec::with_capacity(len);
        for i in 0..len {
            let (a, b, m, g) = (c.x.data()[i], c.y.data()[i], c.gate.data()[i], dz.data()[i]);
            dx.push(g * m);
            dy.push(g * (T::one() - m));
            dm.push(g * (a - b));
        }
        let ds = self.mscam.backward(&Tensor::from_vec(shape, dm)?)?;
        let dx = add(&Tensor::from_vec(shape, dx)?, &ds)?;
        let dy = add(&Tensor::from_vec(shape, dy)?, &ds)?;
        Ok((dx, dy))
    }
}

impl<T: Real> Module<T> for AttentionalFusion<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.mscam.visit(&join(prefix, "mscam"), f);
    }
}
