//! `path,label,split,source_tag` CSV manifests.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Label;

pub const MANIFEST_HEADER: [&str; 4] = ["path", "label", "split", "source_tag"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "eval" => Ok(Split::Eval),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, test or eval)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: String,
    pub label: Label,
    pub split: Split,
    pub source_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Manifest {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.iter().ne(MANIFEST_HEADER) {
            return Err(Error::Manifest {
                line: 1,
                reason: format!(
                    "header must be `{}`, found `{}`",
                    MANIFEST_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Manifest {
                line: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let bad = |reason: String| Error::Manifest { line, reason };
            let path = record[0].to_string();
            if path.is_empty() {
                return Err(bad("empty path".into()));
            }
            let label = Label::from_str(&record[1]).map_err(|e| bad(e.to_string()))?;
            let split = Split::from_str(&record[2]).map_err(|e| bad(e.to_string()))?;
            if !seen.insert(path.clone()) {
                return Err(bad(format!("duplicate path {path:?}")));
            }
            entries.push(ManifestEntry {
                path,
                label,
                split,
                source_tag: record[3].to_string(),
            });
        }
        Ok(Self::new(entries, base_dir))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| e.at(path))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER).expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.path.as_str(),
                e.label.as_str(),
                e.split.as_str(),
                &e.source_tag,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}
