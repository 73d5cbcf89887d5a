use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, ModelFingerprint, RunConfig};
use super::extract::{FeatureIndex, IndexEntry};
use super::manifest::Split;
use crate::blocks::DetectorModel;
use crate::dsp::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};
use crate::features::{mask_feature, pad_center, MaskAxis, MaskSpec, GRID_COLS, GRID_ROWS};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{argmax_accuracy, softmax_cross_entropy, Mode, Module, Sgd, Tensor};

pub const CHECKPOINT_FILE: &str = "checkpoint.affc";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const MASK_STREAM: u64 = 0x4d41_534b;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's samples.
    pub loss: f64,
    /// Train-mode accuracy over the epoch's samples.
    pub accuracy: f64,
}

/// Raw features of one segment, one slot per kind.
#[derive(Debug, Clone)]
pub(crate) struct SegmentFeatures {
    pub mfcc: Option<FeatureMatrix>,
    pub lfcc: Option<FeatureMatrix>,
    pub label: usize,
}

impl SegmentFeatures {
    fn get(&self, kind: FeatureKind) -> Option<&FeatureMatrix> {
        match kind {
            FeatureKind::Mfcc => self.mfcc.as_ref(),
            FeatureKind::Lfcc => self.lfcc.as_ref(),
        }
    }
}

pub(crate) fn load_segments(
    index: &FeatureIndex,
    entries: &[&IndexEntry],
    kinds: &[FeatureKind],
) -> Result<Vec<SegmentFeatures>> {
    entries
        .iter()
        .map(|e| {
            let load = |k| -> Result<Option<FeatureMatrix>> {
                kinds
                    .contains(&k)
                    .then(|| index.load_feature(e, k))
                    .transpose()
            };
            Ok(SegmentFeatures {
                mfcc: load(FeatureKind::Mfcc)?,
                lfcc: load(FeatureKind::Lfcc)?,
                label: e.label.index(),
            })
        })
        .collect()
}

/// Stacks the padded matrices of one kind into an N x 1 x 136 x 44 tensor.
pub(crate) fn grid_batch<'a>(
    mats: impl ExactSizeIterator<Item = &'a FeatureMatrix>,
) -> Result<Tensor<f32>> {
    let n = mats.len();
    let mut data = Vec::with_capacity(n * GRID_ROWS * GRID_COLS);
    for m in mats {
        data.extend_from_slice(pad_center(m).values());
    }
    Tensor::from_vec([n, 1, GRID_ROWS, GRID_COLS], data)
}

/// Time and frequency masks with seeds drawn from (seed, epoch, sample, kind, axis).
fn augment(
    m: &FeatureMatrix,
    fraction: f64,
    seed: u64,
    epoch: usize,
    sample: usize,
) -> Result<FeatureMatrix> {
    let mut out = m.clone();
    for (tag, axis) in [(0u64, MaskAxis::Time), (1, MaskAxis::Frequency)] {
        let s = derive_seed(&[
            MASK_STREAM,
            seed,
            epoch as u64,
            sample as u64,
            m.kind().tag() as u64,
            tag,
        ]);
        out = mask_feature(&out, &MaskSpec::new(axis, fraction, s)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: DetectorModel<f32>,
    pub fingerprint: ModelFingerprint,
    pub log: Vec<EpochLog>,
}

impl TrainOutput {
    pub fn checkpoint(&mut self) -> Checkpoint {
        Checkpoint::capture(&mut self.model, &self.fingerprint.to_json())
    }

    pub fn log_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss\taccuracy\n");
        for e in &self.log {
            let _ = writeln!(out, "{}\t{}\t{}", e.epoch, e.loss, e.accuracy);
        }
        out
    }

    /// Writes `checkpoint.affc` and `train_log.tsv` into `out_dir`.
    pub fn save(&mut self, out_dir: impl AsRef<Path>) -> Result<()> {
        let out_dir = out_dir.as_ref();
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        self.checkpoint().save(out_dir.join(CHECKPOINT_FILE))?;
        let log_path = out_dir.join(TRAIN_LOG_FILE);
        fs::write(&log_path, self.log_tsv()).map_err(|e| Error::io(&log_path, e))
    }
}

/// Trains the configured model on the index's train split.
///
/// Batches are drawn from a seeded per-epoch permutation. With masking
/// enabled, every sample gets a fresh time mask and frequency mask each epoch,
/// applied to the raw matrix before padding.
pub fn train(index: &FeatureIndex, cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let fingerprint = index.fingerprint(&cfg.model)?;
    if fingerprint != cfg.model_fingerprint() {
        log::warn!("feature settings in the run config differ from the index; using the index");
    }
    let kinds = cfg.feature_kinds();
    let entries = index.split(Split::Train);
    if entries.is_empty() {
        return Err(Error::Degenerate(
            "the index has no train-split segments".into(),
        ));
    }
    let data = load_segments(index, &entries, &kinds)?;
    let mut model = DetectorModel::<f32>::new(cfg.model, cfg.seed)?;
    let mut opt = Sgd::<f32>::new(cfg.train.sgd())?;
    let masking = cfg.model.masking;
    let mut log = Vec::with_capacity(cfg.train.epochs);

    for epoch in 0..cfg.train.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            SHUFFLE_STREAM,
            cfg.seed,
            epoch as u64,
        ])));
        let (mut loss_sum, mut correct) = (0.0, 0.0);
        for batch in order.chunks(cfg.train.batch_size) {
            let mut inputs: [Option<Tensor<f32>>; 2] = [None, None];
            for (slot, &kind) in [FeatureKind::Mfcc, FeatureKind::Lfcc].iter().enumerate() {
                if !kinds.contains(&kind) {
                    continue;
                }
                let mats = batch
                    .iter()
                    .map(|&i| {
                        let m = data[i].get(kind).expect("loaded kind");
                        if masking {
                            augment(m, cfg.masking.fraction, cfg.masking.seed, epoch, i)
                        } else {
                            Ok(m.clone())
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                inputs[slot] = Some(grid_batch(mats.iter())?);
            }
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].label).collect();
            let logits = model.forward(inputs[0].as_ref(), inputs[1].as_ref(), Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            model.zero_grad();
            model.backward(&grad)?;
            opt.step(&mut model);
            loss_sum += loss as f64 * batch.len() as f64;
            correct += argmax_accuracy(&logits, &labels) * batch.len() as f64;
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / data.len() as f64,
            accuracy: correct / data.len() as f64,
        };
        log::info!(
            "epoch {}/{}: loss {:.4} accuracy {:.4}",
            entry.epoch,
            cfg.train.epochs,
            entry.loss,
            entry.accuracy
        );
        if !entry.loss.is_finite() {
            return Err(Error::Degenerate(format!(
                "training diverged at epoch {} (loss {})",
                entry.epoch, entry.loss
            )));
        }
        log.push(entry);
    }
    Ok(TrainOutput {
        model,
        fingerprint,
        log,
    })
}
