use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FeatureSettings, ModelFingerprint};
use super::manifest::{Manifest, ManifestEntry, Split};
use crate::audio_io::{load_wav, segment_one_second};
use crate::blocks::BackboneConfig;
use crate::dsp::{CepstralConfig, CepstralExtractor, FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};
use crate::features::{read_feature, write_feature};
use crate::metrics::Label;

pub const INDEX_FILE: &str = "index.json";
pub const INDEX_VERSION: u32 = 1;

/// One one-second segment and its feature files, relative to the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    /// Manifest path of the source recording.
    pub source: String,
    pub segment: usize,
    pub label: Label,
    pub split: Split,
    pub source_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfcc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lfcc: Option<String>,
}

impl IndexEntry {
    pub fn file(&self, kind: FeatureKind) -> Option<&str> {
        match kind {
            FeatureKind::Mfcc => self.mfcc.as_deref(),
            FeatureKind::Lfcc => self.lfcc.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFailure {
    pub source: String,
    pub error: String,
}

/// Result of an extraction run: the front-end settings used, every segment
/// written, and every source that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureIndex {
    pub version: u32,
    pub mfcc: Option<CepstralConfig>,
    pub lfcc: Option<CepstralConfig>,
    pub segments: Vec<IndexEntry>,
    pub failures: Vec<IndexFailure>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl FeatureIndex {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "csv") {
            return Err(Error::MissingFeatures(format!(
                "{} is an audio manifest; run `affdetect extract --manifest {} --out <dir>` \
                 and pass <dir>/{INDEX_FILE}",
                path.display(),
                path.display()
            )));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut index: FeatureIndex =
            serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))?;
        if index.version != INDEX_VERSION {
            return Err(Error::BadVersion(index.version).at(path));
        }
        index.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn config(&self, kind: FeatureKind) -> Option<&CepstralConfig> {
        match kind {
            FeatureKind::Mfcc => self.mfcc.as_ref(),
            FeatureKind::Lfcc => self.lfcc.as_ref(),
        }
    }

    /// The fingerprint a model reading these features would carry. Fails
    /// when the index lacks a feature kind the model needs.
    pub fn fingerprint(&self, model: &BackboneConfig) -> Result<ModelFingerprint> {
        let need = |kind: FeatureKind| -> Result<CepstralConfig> {
            self.config(kind).copied().ok_or_else(|| {
                Error::MissingFeatures(format!(
                    "fusion mode {:?} needs {} features but the index has none; \
                     re-run `affdetect extract` with a config using this fusion mode",
                    model.fusion,
                    kind.as_str()
                ))
            })
        };
        Ok(ModelFingerprint {
            mfcc: model
                .fusion
                .uses_mfcc()
                .then(|| need(FeatureKind::Mfcc))
                .transpose()?,
            lfcc: model
                .fusion
                .uses_lfcc()
                .then(|| need(FeatureKind::Lfcc))
                .transpose()?,
            model: *model,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&IndexEntry> {
        self.segments.iter().filter(|e| e.split == split).collect()
    }

    pub fn load_feature(&self, entry: &IndexEntry, kind: FeatureKind) -> Result<FeatureMatrix> {
        let rel = entry.file(kind).ok_or_else(|| {
            Error::MissingFeatures(format!(
                "segment {} has no {} file; re-run `affdetect extract`",
                entry.id,
                kind.as_str()
            ))
        })?;
        read_feature(self.base_dir.join(rel))
    }
}

fn file_stem(path: &str) -> String {
    let stem = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn extract_one(
    manifest: &Manifest,
    row: usize,
    entry: &ManifestEntry,
    extractors: &[CepstralExtractor],
    out_dir: &Path,
) -> Result<Vec<IndexEntry>> {
    let path = manifest.resolve(entry);
    let clip = load_wav(&path)?;
    let segments = segment_one_second(&clip);
    if segments.is_empty() {
        return Err(Error::TooShort {
            samples: clip.len(),
            sample_rate: clip.sample_rate(),
        }
        .at(&path));
    }
    let id_base = format!("{row:06}_{}", file_stem(&entry.path));
    segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let id = format!("{id_base}_s{s:03}");
            let mut out = IndexEntry {
                id: id.clone(),
                source: entry.path.clone(),
                segment: s,
                label: entry.label,
                split: entry.split,
                source_tag: entry.source_tag.clone(),
                mfcc: None,
                lfcc: None,
            };
            for ex in extractors {
                let m = ex.extract(seg).map_err(|e| e.at(&path))?;
                let rel = format!("features/{id}.{}.affd", ex.kind().as_str());
                write_feature(out_dir.join(&rel), m.kind(), m.rows(), m.cols(), m.values())?;
                match ex.kind() {
                    FeatureKind::Mfcc => out.mfcc = Some(rel),
                    FeatureKind::Lfcc => out.lfcc = Some(rel),
                }
            }
            Ok(out)
        })
        .collect()
}

/// Cuts every manifest recording into one-second segments and writes one
/// feature file per segment and kind under `out_dir/features`, then the
/// index at `out_dir/index.json`. Files are processed in parallel; a file
/// that fails is recorded in the index and the run continues.
pub fn extract(
    manifest: &Manifest,
    settings: &FeatureSettings,
    kinds: &[FeatureKind],
    out_dir: impl AsRef<Path>,
) -> Result<FeatureIndex> {
    let out_dir = out_dir.as_ref();
    if kinds.is_empty() {
        return Err(Error::Config("no feature kinds requested".into()));
    }
    let feature_dir = out_dir.join("features");
    fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;
    let extractors = kinds
        .iter()
        .map(|&k| CepstralExtractor::new(k, *settings.get(k)))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<Result<Vec<IndexEntry>>> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(row, entry)| extract_one(manifest, row, entry, &extractors, out_dir))
        .collect();

    let mut segments = Vec::new();
    let mut failures = Vec::new();
    for (entry, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(s) => segments.extend(s),
            Err(e) => {
                log::warn!("{}: {e}", entry.path);
                failures.push(IndexFailure {
                    source: entry.path.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let index = FeatureIndex {
        version: INDEX_VERSION,
        mfcc: kinds.contains(&FeatureKind::Mfcc).then_some(settings.mfcc),
        lfcc: kinds.contains(&FeatureKind::Lfcc).then_some(settings.lfcc),
        segments,
        failures,
        base_dir: out_dir.to_path_buf(),
    };
    index.save(out_dir.join(INDEX_FILE))?;
    Ok(index)
}
