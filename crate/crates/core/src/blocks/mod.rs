//! Squeeze-and-excitation, multi-scale channel attention, attentional feature
//! fusion, and the SE-ResNet classifiers assembled from them.

mod attention;
mod model;
mod residual;
mod se;

pub use attention::{AttentionalFusion, ChannelBottleneck, MsCam};
pub use model::{DetectorModel, InputGrads, Stem};
pub use residual::{BlockKind, ConvBn, SeResidualBlock};
pub use se::SqueezeExcitation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Basic blocks.
    Resnet34Se,
    /// Bottleneck blocks with 4x expansion.
    Resnet50Se,
}

impl Variant {
    pub fn block_kind(self) -> BlockKind {
        match self {
            Variant::Resnet34Se => BlockKind::Basic,
            Variant::Resnet50Se => BlockKind::Bottleneck,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    MfccOnly,
    LfccOnly,
    Aff,
}

impl FusionMode {
    pub fn uses_mfcc(self) -> bool {
        matches!(self, FusionMode::MfccOnly | FusionMode::Aff)
    }

    pub fn uses_lfcc(self) -> bool {
        matches!(self, FusionMode::LfccOnly | FusionMode::Aff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub variant: Variant,
    pub stage_blocks: [usize; 4],
    pub base_width: usize,
    pub fusion: FusionMode,
    pub masking: bool,
    pub se_reduction: usize,
    pub mscam_reduction: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Resnet34Se,
            stage_blocks: [3, 4, 6, 3],
            base_width: 64,
            fusion: FusionMode::Aff,
            masking: false,
            se_reduction: 16,
            mscam_reduction: 4,
        }
    }
}

impl BackboneConfig {
    /// Width 8, one block per stage.
    pub fn toy(variant: Variant, fusion: FusionMode) -> Self {
        Self {
            variant,
            stage_blocks: [1, 1, 1, 1],
            base_width: 8,
            fusion,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        if self.stage_blocks.contains(&0) {
            return Err(Error::Config(format!(
                "every stage needs at least one block, got {:?}",
                self.stage_blocks
            )));
        }
        if self.se_reduction == 0 || self.mscam_reduction == 0 {
            return Err(Error::Config("reduction ratios must be positive".into()));
        }
        Ok(())
    }

    pub fn stage_width(&self, stage: usize) -> usize {
        self.base_width << stage
    }

    pub fn output_width(&self) -> usize {
        self.stage_width(3) * self.variant.block_kind().expansion()
    }
}
