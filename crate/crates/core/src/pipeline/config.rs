use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use crate::blocks::BackboneConfig;
use crate::dsp::{CepstralConfig, FeatureKind};
use crate::error::{Error, Result};
use crate::features::MaskSpec;
use crate::nn::checkpoint::{config_digest, ConfigDigest};
use crate::nn::SgdConfig;

fn mfcc_default() -> CepstralConfig {
    CepstralConfig::mfcc_default()
}

fn lfcc_default() -> CepstralConfig {
    CepstralConfig::lfcc_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSettings {
    #[serde(default = "mfcc_default")]
    pub mfcc: CepstralConfig,
    #[serde(default = "lfcc_default")]
    pub lfcc: CepstralConfig,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            mfcc: mfcc_default(),
            lfcc: lfcc_default(),
        }
    }
}

impl FeatureSettings {
    pub fn get(&self, kind: FeatureKind) -> &CepstralConfig {
        match kind {
            FeatureKind::Mfcc => &self.mfcc,
            FeatureKind::Lfcc => &self.lfcc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingConfig {
    /// Band width as a fraction of the masked axis.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            fraction: MaskSpec::DEFAULT_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 8,
            epochs: 30,
        }
    }
}

impl TrainConfig {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Scores at or above the threshold predict fake.
    pub threshold: f64,
    /// Average segment scores per source file before computing metrics.
    pub pool_per_file: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            pool_per_file: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub feature: FeatureKind,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::Mfcc,
            hidden: vec![5, 2],
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 8,
            epochs: 30,
        }
    }
}

/// Everything a run needs, read from a TOML file. Every section is optional
/// and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub features: FeatureSettings,
    pub model: BackboneConfig,
    pub masking: MaskingConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub mlp: MlpConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            features: FeatureSettings::default(),
            model: BackboneConfig::default(),
            masking: MaskingConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            mlp: MlpConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.at(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.features.mfcc.validate()?;
        self.features.lfcc.validate()?;
        self.model.validate()?;
        MaskSpec::new(crate::features::MaskAxis::Time, self.masking.fraction, 0)?;
        crate::nn::Sgd::<f32>::new(self.train.sgd())?;
        if self.train.batch_size == 0 || self.mlp.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(Error::Config(format!(
                "threshold {} must lie in [0, 1]",
                self.eval.threshold
            )));
        }
        if self.mlp.hidden.contains(&0) {
            return Err(Error::Config("MLP hidden widths must be positive".into()));
        }
        self.synth.validate()
    }

    /// Feature kinds the configured fusion mode consumes.
    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        model_kinds(&self.model)
    }

    pub fn model_fingerprint(&self) -> ModelFingerprint {
        ModelFingerprint::new(&self.features, &self.model)
    }
}

pub(crate) fn model_kinds(model: &BackboneConfig) -> Vec<FeatureKind> {
    let mut kinds = Vec::new();
    if model.fusion.uses_mfcc() {
        kinds.push(FeatureKind::Mfcc);
    }
    if model.fusion.uses_lfcc() {
        kinds.push(FeatureKind::Lfcc);
    }
    kinds
}

/// The configuration a checkpoint is bound to: the front-ends the model
/// reads and the backbone. Serialized as canonical JSON and hashed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFingerprint {
    pub mfcc: Option<CepstralConfig>,
    pub lfcc: Option<CepstralConfig>,
    pub model: BackboneConfig,
}

impl ModelFingerprint {
    /// Keeps only the front-ends the fusion mode uses.
    pub fn new(features: &FeatureSettings, model: &BackboneConfig) -> Self {
        Self {
            mfcc: model.fusion.uses_mfcc().then_some(features.mfcc),
            lfcc: model.fusion.uses_lfcc().then_some(features.lfcc),
            model: *model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fingerprint serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn digest(&self) -> ConfigDigest {
        config_digest(&self.to_json())
    }

    pub fn get(&self, kind: FeatureKind) -> Option<&CepstralConfig> {
        match kind {
            FeatureKind::Mfcc => self.mfcc.as_ref(),
            FeatureKind::Lfcc => self.lfcc.as_ref(),
        }
    }
}

/// SplitMix64 over the parts, for deriving independent stream seeds.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        state ^= p;
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}
