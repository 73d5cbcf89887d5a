//! Corpus generation, feature extraction, training, evaluation and inference.

pub mod config;
pub mod eval;
pub mod extract;
pub mod manifest;
pub mod mlp;
pub mod synth;
pub mod train;

pub use config::{
    derive_seed, EvalConfig, FeatureSettings, MaskingConfig, MlpConfig, ModelFingerprint,
    RunConfig, TrainConfig,
};
pub use eval::{evaluate_split, infer_file, Detector, EvalOutput, Inference, ScoredSegment};
pub use extract::{extract, FeatureIndex, IndexEntry, IndexFailure, INDEX_FILE};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use mlp::{train_mlp, Mlp, MlpOutput};
pub use synth::{generate, write_corpus, ArtifactMode, SynthClip, SynthSpec};
pub use train::{train, EpochLog, TrainOutput, CHECKPOINT_FILE, TRAIN_LOG_FILE};
