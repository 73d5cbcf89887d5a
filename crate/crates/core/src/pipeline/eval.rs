use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{ModelFingerprint, RunConfig};
use super::extract::{FeatureIndex, IndexEntry};
use super::manifest::Split;
use super::train::{grid_batch, load_segments, TrainOutput};
use crate::audio_io::{load_wav, segment_one_second};
use crate::blocks::DetectorModel;
use crate::dsp::{CepstralExtractor, FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, mean_pool, EvalReport, Label, ScoredSample};
use crate::nn::checkpoint::{digest_hex, Checkpoint, ConfigDigest};

pub const REPORT_FILE: &str = "report.txt";
pub const METRICS_FILE: &str = "metrics.kv";
pub const ROC_FILE: &str = "roc.txt";
pub const SCORES_FILE: &str = "scores.tsv";

const SCORE_CHUNK: usize = 16;

/// A trained model together with the configuration it is bound to.
#[derive(Debug, Clone)]
pub struct Detector {
    model: DetectorModel<f32>,
    fingerprint: ModelFingerprint,
    digest: ConfigDigest,
}

impl Detector {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let fingerprint = ModelFingerprint::from_json(&ck.config_json)
            .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
        ck.verify_digest(&fingerprint.digest())?;
        let mut model = DetectorModel::new(fingerprint.model, 0)?;
        ck.restore(&mut model)?;
        Ok(Self {
            model,
            fingerprint,
            digest: ck.digest,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&Checkpoint::load(path)?).map_err(|e| e.at(path))
    }

    pub fn from_trained(out: TrainOutput) -> Self {
        let digest = out.fingerprint.digest();
        Self {
            model: out.model,
            fingerprint: out.fingerprint,
            digest,
        }
    }

    pub fn fingerprint(&self) -> &ModelFingerprint {
        &self.fingerprint
    }

    pub fn digest_hex(&self) -> String {
        digest_hex(&self.digest)
    }

    /// Fails with both digests unless `other` is the fingerprint this model was trained with.
    pub fn verify(&self, other: &ModelFingerprint) -> Result<()> {
        let d = other.digest();
        if d != self.digest {
            return Err(Error::DigestMismatch {
                checkpoint: digest_hex(&self.digest),
                data: digest_hex(&d),
            });
        }
        Ok(())
    }

    /// Checks the index was extracted with the front-ends this model expects.
    pub fn verify_index(&self, index: &FeatureIndex) -> Result<()> {
        self.verify(&index.fingerprint(&self.fingerprint.model)?)
    }

    /// Checks a run config describes this model.
    pub fn verify_config(&self, cfg: &RunConfig) -> Result<()> {
        self.verify(&cfg.model_fingerprint())
    }

    fn kinds(&self) -> Vec<FeatureKind> {
        super::config::model_kinds(&self.fingerprint.model)
    }

    /// Fake-class probability for each item. `mfcc` and `lfcc` hold raw
    /// matrices; the kinds the model does not read may be empty.
    pub fn score(&self, mfcc: &[FeatureMatrix], lfcc: &[FeatureMatrix]) -> Result<Vec<f64>> {
        let kinds = self.kinds();
        let n = if kinds.contains(&FeatureKind::Mfcc) {
            mfcc.len()
        } else {
            lfcc.len()
        };
        if kinds.len() == 2 && mfcc.len() != lfcc.len() {
            return Err(Error::Dimension(format!(
                "{} mfcc matrices but {} lfcc matrices",
                mfcc.len(),
                lfcc.len()
            )));
        }
        let starts: Vec<usize> = (0..n).step_by(SCORE_CHUNK).collect();
        let chunks: Vec<Result<Vec<f64>>> = starts
            .par_iter()
            .map(|&s| {
                let e = (s + SCORE_CHUNK).min(n);
                let xm = kinds
                    .contains(&FeatureKind::Mfcc)
                    .then(|| grid_batch(mfcc[s..e].iter()))
                    .transpose()?;
                let xl = kinds
                    .contains(&FeatureKind::Lfcc)
                    .then(|| grid_batch(lfcc[s..e].iter()))
                    .transpose()?;
                self.model.clone().predict_proba(xm.as_ref(), xl.as_ref())
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// Scores index segments, loading their feature files.
    pub fn score_entries(&self, index: &FeatureIndex, entries: &[&IndexEntry]) -> Result<Vec<f64>> {
        let data = load_segments(index, entries, &self.kinds())?;
        let (mfcc, lfcc): (Vec<_>, Vec<_>) = data.into_iter().map(|s| (s.mfcc, s.lfcc)).unzip();
        let mfcc: Vec<FeatureMatrix> = mfcc.into_iter().flatten().collect();
        let lfcc: Vec<FeatureMatrix> = lfcc.into_iter().flatten().collect();
        self.score(&mfcc, &lfcc)
    }

    /// Scores every one-second segment of a recording.
    pub fn score_clip(&self, clip: &crate::audio_io::AudioClip) -> Result<Vec<f64>> {
        let segments = segment_one_second(clip);
        if segments.is_empty() {
            return Err(Error::TooShort {
                samples: clip.len(),
                sample_rate: clip.sample_rate(),
            });
        }
        let mut feats: [Vec<FeatureMatrix>; 2] = [Vec::new(), Vec::new()];
        for kind in self.kinds() {
            let cfg = *self
                .fingerprint
                .get(kind)
                .expect("fingerprint covers used kinds");
            let ex = CepstralExtractor::new(kind, cfg)?;
            let slot = match kind {
                FeatureKind::Mfcc => 0,
                FeatureKind::Lfcc => 1,
            };
            feats[slot] = segments
                .iter()
                .map(|s| ex.extract(s))
                .collect::<Result<_>>()?;
        }
        self.score(&feats[0], &feats[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSegment {
    pub id: String,
    pub source: String,
    pub label: Label,
    pub source_tag: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub split: Split,
    pub pooled: bool,
    pub report: EvalReport,
    pub segments: Vec<ScoredSegment>,
}

impl EvalOutput {
    pub fn scores_tsv(&self) -> String {
        let mut out = String::from("id\tsource\tlabel\tsource_tag\tscore\n");
        for s in &self.segments {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                s.id, s.source, s.label, s.source_tag, s.score
            );
        }
        out
    }

    pub fn report_text(&self) -> String {
        let unit = if self.pooled { "files" } else { "segments" };
        format!(
            "split: {}  unit: {unit}\n{}",
            self.split,
            self.report.to_text()
        )
    }

    /// Writes the report, key-value metrics, ROC points and per-segment scores.
    pub fn save(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let out_dir = out_dir.as_ref();
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        for (name, text) in [
            (REPORT_FILE, self.report_text()),
            (METRICS_FILE, self.report.to_key_value()),
            (ROC_FILE, self.report.roc_text()),
            (SCORES_FILE, self.scores_tsv()),
        ] {
            let path = out_dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Scores one split of the index and computes metrics, per segment or per
/// source file when `pool_per_file` is set.
pub fn evaluate_split(
    detector: &Detector,
    index: &FeatureIndex,
    split: Split,
    threshold: f64,
    pool_per_file: bool,
) -> Result<EvalOutput> {
    detector.verify_index(index)?;
    let entries = index.split(split);
    if entries.is_empty() {
        return Err(Error::Degenerate(format!(
            "the index has no {split}-split segments"
        )));
    }
    let scores = detector.score_entries(index, &entries)?;
    let segments: Vec<ScoredSegment> = entries
        .iter()
        .zip(&scores)
        .map(|(e, &score)| ScoredSegment {
            id: e.id.clone(),
            source: e.source.clone(),
            label: e.label,
            source_tag: e.source_tag.clone(),
            score,
        })
        .collect();
    let mut samples: Vec<ScoredSample> = segments
        .iter()
        .map(|s| ScoredSample::new(s.score, s.label, s.source_tag.clone()))
        .collect();
    if pool_per_file {
        let keys: Vec<&str> = segments.iter().map(|s| s.source.as_str()).collect();
        samples = mean_pool(&samples, &keys)?;
    }
    Ok(EvalOutput {
        split,
        pooled: pool_per_file,
        report: evaluate(&samples, threshold)?,
        segments,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub segment_scores: Vec<f64>,
    /// Mean of the segment scores.
    pub score: f64,
    pub label: Label,
}

impl Inference {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "label\t{}\nscore\t{}\nsegments\t{}\n",
            self.label,
            self.score,
            self.segment_scores.len()
        );
        for (i, s) in self.segment_scores.iter().enumerate() {
            let _ = writeln!(out, "segment_{i}\t{s}");
        }
        out
    }
}

/// Scores a recording and labels it fake when the mean segment score
/// reaches `threshold`.
pub fn infer_file(detector: &Detector, wav: impl AsRef<Path>, threshold: f64) -> Result<Inference> {
    let wav = wav.as_ref();
    let clip = load_wav(wav)?;
    let segment_scores = detector.score_clip(&clip).map_err(|e| e.at(wav))?;
    let score = segment_scores.iter().sum::<f64>() / segment_scores.len() as f64;
    Ok(Inference {
        label: if score >= threshold {
            Label::Fake
        } else {
            Label::Real
        },
        score,
        segment_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{BackboneConfig, FusionMode, Variant};
    use crate::pipeline::extract::{extract, INDEX_FILE};
    use crate::pipeline::synth::{write_corpus, SynthSpec};
    use crate::pipeline::train::train;

    fn tiny_run(dir: &Path, fusion: FusionMode) -> (FeatureIndex, RunConfig) {
        let mut cfg = RunConfig::default();
        cfg.model = BackboneConfig::toy(Variant::Resnet34Se, fusion);
        cfg.train.epochs = 1;
        cfg.synth = SynthSpec {
            n_per_class: 4,
            split: [0.5, 0.5, 0.0],
            ..SynthSpec::default()
        };
        let manifest = write_corpus(&cfg.synth, 3, dir.join("corpus")).unwrap();
        extract(
            &manifest,
            &cfg.features,
            &[FeatureKind::Mfcc, FeatureKind::Lfcc],
            dir.join("feat"),
        )
        .unwrap();
        (
            FeatureIndex::load(dir.join("feat").join(INDEX_FILE)).unwrap(),
            cfg,
        )
    }

    #[test]
    fn checkpoint_round_trip_scores_identically() {
        let dir = tempfile::tempdir().unwrap();
        let (index, cfg) = tiny_run(dir.path(), FusionMode::Aff);
        let mut out = train(&index, &cfg).unwrap();
        out.save(dir.path().join("run")).unwrap();
        let direct = Detector::from_trained(out);
        let loaded = Detector::load(
            dir.path()
                .join("run")
                .join(super::super::train::CHECKPOINT_FILE),
        )
        .unwrap();
        assert_eq!(direct.digest_hex(), loaded.digest_hex());

        let a = evaluate_split(&direct, &index, Split::Test, 0.5, false).unwrap();
        let b = evaluate_split(&loaded, &index, Split::Test, 0.5, false).unwrap();
        assert_eq!(a.segments, b.segments);
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.samples, 4);
        assert!(a.segments.iter().all(|s| (0.0..=1.0).contains(&s.score)));

        let pooled = evaluate_split(&direct, &index, Split::Test, 0.5, true).unwrap();
        assert_eq!(pooled.report.samples, 4);
        assert!(evaluate_split(&direct, &index, Split::Eval, 0.5, false).is_err());

        a.save(dir.path().join("eval")).unwrap();
        let tsv = fs::read_to_string(dir.path().join("eval").join(SCORES_FILE)).unwrap();
        assert_eq!(tsv.lines().count(), 5);
    }

    #[test]
    fn scores_are_batch_independent() {
        let dir = tempfile::tempdir().unwrap();
        let (index, cfg) = tiny_run(dir.path(), FusionMode::MfccOnly);
        let det = Detector::from_trained(train(&index, &cfg).unwrap());
        let entries = index.split(Split::Train);
        let all = det.score_entries(&index, &entries).unwrap();
        let one = det.score_entries(&index, &entries[1..2]).unwrap();
        assert_eq!(one[0], all[1]);
    }

    #[test]
    fn digest_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (index, cfg) = tiny_run(dir.path(), FusionMode::Aff);
        let det = Detector::from_trained(train(&index, &cfg).unwrap());
        let mut other = cfg.clone();
        other.features.lfcc.n_coeffs = 12;
        let err = det.verify_config(&other).unwrap_err();
        match err {
            Error::DigestMismatch { checkpoint, data } => {
                assert_eq!(checkpoint, det.digest_hex());
                assert_ne!(checkpoint, data);
            }
            e => panic!("unexpected {e}"),
        }
        det.verify_config(&cfg).unwrap();
    }

    #[test]
    fn infer_matches_index_scores() {
        let dir = tempfile::tempdir().unwrap();
        let (index, cfg) = tiny_run(dir.path(), FusionMode::Aff);
        let det = Detector::from_trained(train(&index, &cfg).unwrap());
        let entry = index.split(Split::Test)[0];
        let from_index = det.score_entries(&index, &[entry]).unwrap()[0];
        let wav = dir.path().join("corpus").join(&entry.source);
        let inf = infer_file(&det, &wav, 0.5).unwrap();
        assert_eq!(inf.segment_scores.len(), 1);
        assert!(
            (inf.score - from_index).abs() < 1e-6,
            "{} vs {from_index}",
            inf.score
        );
    }

    #[test]
    fn tampered_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (index, cfg) = tiny_run(dir.path(), FusionMode::MfccOnly);
        let mut out = train(&index, &cfg).unwrap();
        let mut ck = out.checkpoint();
        ck.config_json = ck
            .config_json
            .replace("\"base_width\":8", "\"base_width\":16");
        assert!(Detector::from_checkpoint(&ck).is_err());
    }
}
