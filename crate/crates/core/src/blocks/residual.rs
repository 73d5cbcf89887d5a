use rand::Rng;

use super::SqueezeExcitation;
use crate::error::{Error, Result};
use crate::nn::{
    add, join, BatchNorm2d, Conv2d, Mode, Module, Padding, ParamKind, Real, Relu, Tensor,
};

/// Convolution followed by batch-norm.
#[derive(Debug, Clone)]
pub struct ConvBn<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Real> ConvBn<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self {
            conv: Conv2d::new(
                rng,
                in_ch,
                out_ch,
                (kernel, kernel),
                stride,
                Padding::Same,
                false,
            ),
            bn: BatchNorm2d::new(out_ch),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv.forward(x, mode)?;
        self.bn.forward(&h, mode)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.bn.backward(dy)?;
        self.conv.backward(&g)
    }
}

impl<T: Real> Module<T> for ConvBn<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Two 3x3 convolutions.
    Basic,
    /// 1x1 reduce, 3x3, 1x1 expand to four times the block width.
    Bottleneck,
}

impl BlockKind {
    pub fn expansion(self) -> usize {
        match self {
            BlockKind::Basic => 1,
            BlockKind::Bottleneck => 4,
        }
    }
}

/// Residual block with squeeze-and-excitation on the residual branch:
/// `out = relu(skip(x) + SE(stack(x)))`. A strided or widening block projects
/// the skip path with a 1x1 convolution and batch-norm.
#[derive(Debug, Clone)]
pub struct SeResidualBlock<T> {
    pub stack: Vec<ConvBn<T>>,
    inner_relus: Vec<Relu<T>>,
    pub se: SqueezeExcitation<T>,
    pub projection: Option<ConvBn<T>>,
    out_relu: Relu<T>,
    kind: BlockKind,
    cached: bool,
}

impl<T: Real> SeResidualBlock<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        kind: BlockKind,
        in_ch: usize,
        width: usize,
        stride: usize,
        se_reduction: usize,
    ) -> Self {
        let out_ch = width * kind.expansion();
        let stack = match kind {
            BlockKind::Basic => vec![
                ConvBn::new(rng, in_ch, width, 3, stride),
                ConvBn::new(rng, width, width, 3, 1),
            ],
            BlockKind::Bottleneck => vec![
                ConvBn::new(rng, in_ch, width, 1, 1),
                ConvBn::new(rng, width, width, 3, stride),
                ConvBn::new(rng, width, out_ch, 1, 1),
            ],
        };
        let inner_relus = (1..stack.len()).map(|_| Relu::new()).collect();
        let se = SqueezeExcitation::new(rng, out_ch, se_reduction);
        let projection =
            (stride != 1 || in_ch != out_ch).then(|| ConvBn::new(rng, in_ch, out_ch, 1, stride));
        Self {
            stack,
            inner_relus,
            se,
            projection,
            out_relu: Relu::new(),
            kind,
            cached: false,
        }
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn out_channels(&self) -> usize {
        self.se.channels()
    }

    /// Batch-norm closing the residual branch.
    pub fn last_bn_mut(&mut self) -> &mut BatchNorm2d<T> {
        &mut self.stack.last_mut().expect("non-empty stack").bn
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        let last = self.stack.len() - 1;
        for (i, layer) in self.stack.iter_mut().enumerate() {
            h = layer.forward(&h, mode)?;
            if i < last {
                h = self.inner_relus[i].forward(&h);
            }
        }
        let r = self.se.forward(&h, mode)?;
        let skip = match self.projection.as_mut() {
            Some(p) => p.forward(x, mode)?,
            None => x.clone(),
        };
        self.cached = true;
        Ok(self.out_relu.forward(&add(&skip, &r)?))
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        if !std::mem::take(&mut self.cached) {
            return Err(Error::Config(
                "residual block: backward called without forward".into(),
            ));
        }
        let g = self.out_relu.backward(dy)?;
        let dskip = match self.projection.as_mut() {
            Some(p) => p.backward(&g)?,
            None => g.clone(),
        };
        let mut h = self.se.backward(&g)?;
        for i in (0..self.stack.len()).rev() {
            if i < self.stack.len() - 1 {
                h = self.inner_relus[i].backward(&h)?;
            }
            h = self.stack[i].backward(&h)?;
        }
        add(&h, &dskip)
    }
}

impl<T: Real> Module<T> for SeResidualBlock<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        for (i, layer) in self.stack.iter_mut().enumerate() {
            layer.visit(&join(prefix, &format!("conv{}", i + 1)), f);
        }
        self.se.visit(&join(prefix, "se"), f);
        if let Some(p) = self.projection.as_mut() {
            p.visit(&join(prefix, "projection"), f);
        }
    }
}
