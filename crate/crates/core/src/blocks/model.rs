use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AttentionalFusion, BackboneConfig, FusionMode, SeResidualBlock};
use crate::error::{Error, Result};
use crate::nn::{
    join, softmax, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, Mode, Module, Padding, ParamKind,
    Real, Relu, Tensor,
};

/// Per-feature entry: 2x2 stride-1 valid convolution to `base_width`
/// channels, batch-norm, ReLU. Maps 136 x 44 to 135 x 43.
#[derive(Debug, Clone)]
pub struct Stem<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    relu: Relu<T>,
}

impl<T: Real> Stem<T> {
    fn new(rng: &mut ChaCha8Rng, width: usize) -> Self {
        Self {
            conv: Conv2d::new(rng, 1, width, (2, 2), 1, Padding::Valid, false),
            bn: BatchNorm2d::new(width),
            relu: Relu::new(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        Ok(self.relu.forward(&h))
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu.backward(dy)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl<T: Real> Module<T> for Stem<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }
}

#[derive(Debug, Clone, Default)]
pub struct InputGrads<T> {
    pub mfcc: Option<Tensor<T>>,
    pub lfcc: Option<Tensor<T>>,
}

/// Dual-stem SE-ResNet producing two logits per item (0 = real, 1 = fake).
#[derive(Debug, Clone)]
pub struct DetectorModel<T> {
    cfg: BackboneConfig,
    pub mfcc_stem: Option<Stem<T>>,
    pub lfcc_stem: Option<Stem<T>>,
    pub fusion: Option<AttentionalFusion<T>>,
    pub stages: Vec<Vec<SeResidualBlock<T>>>,
    pool: GlobalAvgPool,
    pub head: Linear<T>,
}

impl<T: Real> DetectorModel<T> {
    pub fn new(cfg: BackboneConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = cfg.base_width;
        let mfcc_stem = cfg.fusion.uses_mfcc().then(|| Stem::new(&mut rng, base));
        let lfcc_stem = cfg.fusion.uses_lfcc().then(|| Stem::new(&mut rng, base));
        let fusion = (cfg.fusion == FusionMode::Aff)
            .then(|| AttentionalFusion::new(&mut rng, base, cfg.mscam_reduction));

        let kind = cfg.variant.block_kind();
        let mut in_ch = base;
        let mut stages = Vec::with_capacity(4);
        for (s, &n_blocks) in cfg.stage_blocks.iter().enumerate() {
            let width = cfg.stage_width(s);
            let mut blocks = Vec::with_capacity(n_blocks);
            for b in 0..n_blocks {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let block =
                    SeResidualBlock::new(&mut rng, kind, in_ch, width, stride, cfg.se_reduction);
                in_ch = block.out_channels();
                blocks.push(block);
            }
            stages.push(blocks);
        }
        let head = Linear::new(&mut rng, in_ch, 2);
        Ok(Self {
            cfg,
            mfcc_stem,
            lfcc_stem,
            fusion,
            stages,
            pool: GlobalAvgPool::new(),
            head,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    fn require<'a>(&self, t: Option<&'a Tensor<T>>, name: &str) -> Result<&'a Tensor<T>> {
        let t = t.ok_or_else(|| {
            Error::Config(format!(
                "fusion mode {:?} needs a {name} input",
                self.cfg.fusion
            ))
        })?;
        if t.c() != 1 {
            return Err(Error::Dimension(format!(
                "{name} input {:?} must have one channel",
                t.shape()
            )));
        }
        Ok(t)
    }

    /// Logits N x 2 x 1 x 1. Inputs are N x 1 x H x W padded features; the
    /// input a single-feature mode does not use is ignored.
    pub fn forward(
        &mut self,
        mfcc: Option<&Tensor<T>>,
        lfcc: Option<&Tensor<T>>,
        mode: Mode,
    ) -> Result<Tensor<T>> {
        let mut h = match self.cfg.fusion {
            FusionMode::MfccOnly => {
                let x = self.require(mfcc, "mfcc")?;
                self.mfcc_stem
                    .as_mut()
                    .expect("mfcc stem")
                    .forward(x, mode)?
            }
            FusionMode::LfccOnly => {
                let x = self.require(lfcc, "lfcc")?;
                self.lfcc_stem
                    .as_mut()
                    .expect("lfcc stem")
                    .forward(x, mode)?
            }
            FusionMode::Aff => {
                let xm = self.require(mfcc, "mfcc")?;
                let xl = self.require(lfcc, "lfcc")?;
                let a = self
                    .mfcc_stem
                    .as_mut()
                    .expect("mfcc stem")
                    .forward(xm, mode)?;
                let b = self
                    .lfcc_stem
                    .as_mut()
                    .expect("lfcc stem")
                    .forward(xl, mode)?;
                self.fusion
                    .as_mut()
                    .expect("fusion")
                    .forward(&a, &b, mode)?
            }
        };
        for block in self.stages.iter_mut().flatten() {
            h = block.forward(&h, mode)?;
        }
        let pooled = self.pool.forward(&h);
        self.head.forward(&pooled, mode)
    }

    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<InputGrads<T>> {
        let g = self.head.backward(dlogits)?;
        let mut g = self.pool.backward(&g)?;
        for block in self.stages.iter_mut().flatten().rev() {
            g = block.backward(&g)?;
        }
        Ok(match self.cfg.fusion {
            FusionMode::MfccOnly => InputGrads {
                mfcc: Some(self.mfcc_stem.as_mut().expect("mfcc stem").backward(&g)?),
                lfcc: None,
            },
            FusionMode::LfccOnly => InputGrads {
                mfcc: None,
                lfcc: Some(self.lfcc_stem.as_mut().expect("lfcc stem").backward(&g)?),
            },
            FusionMode::Aff => {
                let (ga, gb) = self.fusion.as_mut().expect("fusion").backward(&g)?;
                InputGrads {
                    mfcc: Some(self.mfcc_stem.as_mut().expect("mfcc stem").backward(&ga)?),
                    lfcc: Some(self.lfcc_stem.as_mut().expect("lfcc stem").backward(&gb)?),
                }
            }
        })
    }

    /// Fake-class probability per item (softmax column 1).
    pub fn predict_proba(
        &mut self,
        mfcc: Option<&Tensor<T>>,
        lfcc: Option<&Tensor<T>>,
    ) -> Result<Vec<f64>> {
        let logits = self.forward(mfcc, lfcc, Mode::Eval)?;
        Ok(softmax(&logits)
            .data()
            .chunks_exact(2)
            .map(|p| p[1].as_f64())
            .collect())
    }
}

impl<T: Real> Module<T> for DetectorModel<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        if let Some(s) = self.mfcc_stem.as_mut() {
            s.visit(&join(prefix, "mfcc_stem"), f);
        }
        if let Some(s) = self.lfcc_stem.as_mut() {
            s.visit(&join(prefix, "lfcc_stem"), f);
        }
        if let Some(a) = self.fusion.as_mut() {
            a.visit(&join(prefix, "aff"), f);
        }
        for (s, blocks) in self.stages.iter_mut().enumerate() {
            for (b, block) in blocks.iter_mut().enumerate() {
                block.visit(&join(prefix, &format!("stage{}.{}", s + 1, b)), f);
            }
        }
        self.head.visit(&join(prefix, "head"), f);
    }
}
