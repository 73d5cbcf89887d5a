//! Fully connected baseline over flattened single-kind features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, MlpConfig};
use super::extract::FeatureIndex;
use super::manifest::Split;
use super::train::{load_segments, EpochLog};
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, ScoredSample};
use crate::nn::{
    argmax_accuracy, join, softmax, softmax_cross_entropy, Linear, Mode, Module, ParamKind, Relu,
    Sgd, SgdConfig, Tensor,
};

const SHUFFLE_STREAM: u64 = 0x4d4c_5053;

/// Hidden layers with ReLU and a two-logit head. Inputs are standardized
/// per dimension with statistics fixed at construction.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear<f32>>,
    relus: Vec<Relu<f32>>,
    mean: Vec<f32>,
    inv_std: Vec<f32>,
}

impl Mlp {
    /// `inputs` rows of equal length supply the standardization statistics.
    pub fn new(inputs: &[Vec<f32>], hidden: &[usize], seed: u64) -> Result<Self> {
        let dim = inputs
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Degenerate("no inputs to size the MLP".into()))?;
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Dimension("MLP inputs differ in length".into()));
        }
        let n = inputs.len() as f64;
        let mut mean = vec![0.0f64; dim];
        for x in inputs {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v as f64 / n;
            }
        }
        let mut var = vec![0.0f64; dim];
        for x in inputs {
            for ((s, &v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v as f64 - m).powi(2) / n;
            }
        }
        // Constant dimensions (zero padding, masked bands) pass through centred.
        let inv_std = var
            .iter()
            .map(|&v| {
                if v > 1e-12 {
                    (1.0 / v.sqrt()) as f32
                } else {
                    1.0
                }
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let layers = widths
            .windows(2)
            .map(|w| Linear::new(&mut rng, w[0], w[1]))
            .collect();
        Ok(Self {
            layers,
            relus: vec![Relu::new(); hidden.len()],
            mean: mean.into_iter().map(|m| m as f32).collect(),
            inv_std,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Zeroes the head so every input scores exactly 0.5.
    pub fn zero_head(&mut self) {
        let head = self.layers.last_mut().expect("head layer");
        head.weight.data_mut().fill(0.0);
        head.bias.data_mut().fill(0.0);
    }

    fn batch(&self, rows: &[&[f32]]) -> Result<Tensor<f32>> {
        let dim = self.input_dim();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension(format!(
                    "MLP input of {} values, expected {dim}",
                    r.len()
                )));
            }
            data.extend(
                r.iter()
                    .zip(&self.mean)
                    .zip(&self.inv_std)
                    .map(|((&v, m), s)| (v - m) * s),
            );
        }
        Tensor::from_vec([rows.len(), dim, 1, 1], data)
    }

    pub fn forward(&mut self, rows: &[&[f32]], mode: Mode) -> Result<Tensor<f32>> {
        let mut h = self.batch(rows)?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            h = layer.forward(&h, mode)?;
            if i < last {
                h = self.relus[i].forward(&h);
            }
        }
        Ok(h)
    }

    pub fn backward(&mut self, dlogits: &Tensor<f32>) -> Result<()> {
        let last = self.layers.len() - 1;
        let mut g = dlogits.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                g = self.relus[i].backward(&g)?;
            }
            g = self.layers[i].backward(&g)?;
        }
        Ok(())
    }

    pub fn predict_proba(&mut self, rows: &[&[f32]]) -> Result<Vec<f64>> {
        let logits = self.forward(rows, Mode::Eval)?;
        Ok(softmax(&logits)
            .data()
            .chunks_exact(2)
            .map(|p| p[1] as f64)
            .collect())
    }
}

impl Module<f32> for Mlp {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<f32>, ParamKind)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit(&join(prefix, &format!("fc{i}")), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpOutput {
    pub model: Mlp,
    pub log: Vec<EpochLog>,
    pub report: EvalReport,
}

fn flat(m: FeatureMatrix) -> Vec<f32> {
    m.values().to_vec()
}

/// Trains the baseline on the train split and evaluates it on `eval_split`.
pub fn train_mlp(
    index: &FeatureIndex,
    cfg: &MlpConfig,
    seed: u64,
    eval_split: Split,
    threshold: f64,
) -> Result<MlpOutput> {
    let kinds = [cfg.feature];
    let load = |split: Split| -> Result<(Vec<Vec<f32>>, Vec<usize>, Vec<String>)> {
        let entries = index.split(split);
        if entries.is_empty() {
            return Err(Error::Degenerate(format!(
                "the index has no {split}-split segments"
            )));
        }
        if index.config(cfg.feature).is_none() {
            return Err(Error::MissingFeatures(format!(
                "the index has no {} features; re-run `affdetect extract`",
                cfg.feature.as_str()
            )));
        }
        let segs = load_segments(index, &entries, &kinds)?;
        let tags = entries.iter().map(|e| e.source_tag.clone()).collect();
        let labels = segs.iter().map(|s| s.label).collect();
        let rows = segs
            .into_iter()
            .map(|s| flat(s.mfcc.or(s.lfcc).expect("requested kind loaded")))
            .collect();
        Ok((rows, labels, tags))
    };
    let (train_x, train_y, _) = load(Split::Train)?;
    let (test_x, test_y, test_tags) = load(eval_split)?;

    let mut model = Mlp::new(&train_x, &cfg.hidden, seed)?;
    let mut opt = Sgd::<f32>::new(SgdConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
    })?;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_x.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            SHUFFLE_STREAM,
            seed,
            epoch as u64,
        ])));
        let (mut loss_sum, mut correct) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f32]> = batch.iter().map(|&i| train_x[i].as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let logits = model.forward(&rows, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            model.zero_grad();
            model.backward(&grad)?;
            opt.step(&mut model);
            loss_sum += loss as f64 * batch.len() as f64;
            correct += argmax_accuracy(&logits, &labels) * batch.len() as f64;
        }
        let n = train_x.len() as f64;
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / n,
            accuracy: correct / n,
        });
    }

    let rows: Vec<&[f32]> = test_x.iter().map(Vec::as_slice).collect();
    let scores = model.predict_proba(&rows)?;
    let samples: Vec<ScoredSample> = scores
        .iter()
        .zip(&test_y)
        .zip(test_tags)
        .map(|((&s, &y), tag)| {
            let label =
                crate::metrics::Label::from_index(y).expect("labels come from Label::index");
            ScoredSample::new(s, label, tag)
        })
        .collect();
    Ok(MlpOutput {
        report: evaluate(&samples, threshold)?,
        model,
        log,
    })
}
