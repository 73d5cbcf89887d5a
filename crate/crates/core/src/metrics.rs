//! ROC, AUC, equal error rate, accuracy and per-source breakdowns.
//!
//! The fake class is the positive class. Curve coordinates are kept as
//! integer counts so that AUC and the EER crossing are each computed with a
//! single floating-point division.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(Error::Config(format!(
                "unknown label {other:?} (expected real or fake)"
            ))),
        }
    }
}

/// Fake-class probability for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub label: Label,
    pub source_tag: String,
}

impl ScoredSample {
    pub fn new(score: f64, label: Label, source_tag: impl Into<String>) -> Self {
        Self {
            score,
            label,
            source_tag: source_tag.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Real samples scored at or above `threshold`.
    pub false_positives: usize,
    /// Fake samples scored at or above `threshold`.
    pub true_positives: usize,
    /// `+inf` for the origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    points: Vec<RocPoint>,
    n_real: usize,
    n_fake: usize,
}

impl Roc {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    pub fn n_real(&self) -> usize {
        self.n_real
    }

    pub fn n_fake(&self) -> usize {
        self.n_fake
    }

    pub fn fpr(&self, i: usize) -> f64 {
        self.points[i].false_positives as f64 / self.n_real as f64
    }

    pub fn tpr(&self, i: usize) -> f64 {
        self.points[i].true_positives as f64 / self.n_fake as f64
    }

    /// `(fpr, tpr)` pairs from (0, 0) to (1, 1).
    pub fn rates(&self) -> Vec<(f64, f64)> {
        (0..self.points.len())
            .map(|i| (self.fpr(i), self.tpr(i)))
            .collect()
    }

    /// `FPR - FNR` scaled by `n_real * n_fake`. Strictly increasing along the curve.
    fn balance(&self, p: &RocPoint) -> i128 {
        let (r, f) = (self.n_real as i128, self.n_fake as i128);
        p.false_positives as i128 * f - (f - p.true_positives as i128) * r
    }
}

/// Sweeps every distinct score in descending order; tied scores enter the
/// positive set together.
pub fn roc_curve(samples: &[ScoredSample]) -> Result<Roc> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Domain(format!(
            "score {} for a {} sample ({}) is not finite",
            s.score, s.label, s.source_tag
        )));
    }
    let n_fake = samples.iter().filter(|s| s.label == Label::Fake).count();
    let n_real = samples.len() - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(Error::Degenerate(format!(
            "ROC needs both classes, got {n_real} real and {n_fake} fake samples"
        )));
    }
    let mut sorted: Vec<(f64, Label)> = samples.iter().map(|s| (s.score, s.label)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        false_positives: 0,
        true_positives: 0,
        threshold: f64::INFINITY,
    }];
    let (mut fp, mut tp) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            match sorted[i].1 {
                Label::Fake => tp += 1,
                Label::Real => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            false_positives: fp,
            true_positives: tp,
            threshold: t,
        });
    }
    Ok(Roc {
        points,
        n_real,
        n_fake,
    })
}

/// Trapezoidal area under the curve.
pub fn auc(roc: &Roc) -> f64 {
    let twice_area: u128 = roc
        .points
        .windows(2)
        .map(|w| {
            let dx = (w[1].false_positives - w[0].false_positives) as u128;
            dx * (w[0].true_positives + w[1].true_positives) as u128
        })
        .sum();
    twice_area as f64 / (2 * roc.n_real as u128 * roc.n_fake as u128) as f64
}

/// Equal error rate and the score threshold at which it occurs.
///
/// The crossing of FPR and FNR = 1 - TPR is linearly interpolated between the
/// two ROC points that bracket it, or taken exactly when it falls on a point.
pub fn eer(roc: &Roc) -> (f64, f64) {
    let pts = &roc.points;
    let (r, f) = (roc.n_real as i128, roc.n_fake as i128);
    // Balance runs from -r*f at the origin to +r*f at (1, 1).
    let k = pts
        .iter()
        .position(|p| roc.balance(p) >= 0)
        .expect("balance is positive at (1, 1)");
    let b = &pts[k];
    if roc.balance(b) == 0 {
        return (b.false_positives as f64 / roc.n_real as f64, b.threshold);
    }
    let a = &pts[k - 1];
    let (fa, fb) = (a.false_positives as i128, b.false_positives as i128);
    let (ta, tb) = (a.true_positives as i128, b.true_positives as i128);
    let num = fa * tb - ta * fb + (fb - fa) * f;
    let den = (fb - fa) * f + (tb - ta) * r;
    let rate = num as f64 / den as f64;

    let t = -roc.balance(a) as f64 / (roc.balance(b) - roc.balance(a)) as f64;
    let threshold = if a.threshold.is_finite() {
        a.threshold + t * (b.threshold - a.threshold)
    } else {
        b.threshold
    };
    (rate, threshold)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positives + self.true_negatives) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagAccuracy {
    pub tag: String,
    pub samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub confusion: Confusion,
    pub roc: Vec<(f64, f64)>,
    pub per_tag: Vec<TagAccuracy>,
}

/// Scores at or above `threshold` are predicted fake.
pub fn evaluate(samples: &[ScoredSample], threshold: f64) -> Result<EvalReport> {
    let roc = roc_curve(samples)?;
    let (eer_value, eer_threshold) = eer(&roc);

    let mut confusion = Confusion::default();
    let mut tags: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let predicted_fake = s.score >= threshold;
        let correct = predicted_fake == (s.label == Label::Fake);
        match (s.label, predicted_fake) {
            (Label::Fake, true) => confusion.true_positives += 1,
            (Label::Fake, false) => confusion.false_negatives += 1,
            (Label::Real, true) => confusion.false_positives += 1,
            (Label::Real, false) => confusion.true_negatives += 1,
        }
        let entry = tags.entry(&s.source_tag).or_default();
        entry.0 += 1;
        entry.1 += usize::from(correct);
    }
    let per_tag = tags
        .into_iter()
        .map(|(tag, (n, ok))| TagAccuracy {
            tag: tag.to_string(),
            samples: n,
            accuracy: ok as f64 / n as f64,
        })
        .collect();
    Ok(EvalReport {
        samples: samples.len(),
        threshold,
        accuracy: confusion.accuracy(),
        auc: auc(&roc),
        eer: eer_value,
        eer_threshold,
        confusion,
        roc: roc.rates(),
        per_tag,
    })
}

/// Averages the scores of samples sharing a key. Groups appear in order of
/// first occurrence; each takes the label and tag of its first member.
pub fn mean_pool<K: AsRef<str>>(samples: &[ScoredSample], keys: &[K]) -> Result<Vec<ScoredSample>> {
    if samples.len() != keys.len() {
        return Err(Error::Dimension(format!(
            "{} samples but {} pooling keys",
            samples.len(),
            keys.len()
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, (ScoredSample, f64, usize)> = BTreeMap::new();
    for (s, k) in samples.iter().zip(keys) {
        let k = k.as_ref();
        match groups.get_mut(k) {
            Some(g) => {
                if g.0.label != s.label {
                    return Err(Error::Config(format!("pooling key {k:?} mixes labels")));
                }
                g.1 += s.score;
                g.2 += 1;
            }
            None => {
                order.push(k);
                groups.insert(k, (s.clone(), s.score, 1));
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|k| {
            let (first, sum, n) = groups.remove(k).expect("group exists");
            ScoredSample {
                score: sum / n as f64,
                ..first
            }
        })
        .collect())
}

impl EvalReport {
    /// Human-readable table with Acc(%), AUC and EER columns.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "samples: {}  threshold: {}",
            self.samples, self.threshold
        );
        let _ = writeln!(out, "{:>8}  {:>6}  {:>6}", "Acc(%)", "AUC", "EER");
        let _ = writeln!(
            out,
            "{:>8.2}  {:>6.3}  {:>6.3}",
            100.0 * self.accuracy,
            self.auc,
            self.eer
        );
        let c = &self.confusion;
        let _ = writeln!(
            out,
            "confusion: tp {} fp {} tn {} fn {}",
            c.true_positives, c.false_positives, c.true_negatives, c.false_negatives
        );
        let _ = writeln!(out, "eer threshold: {:.6}", self.eer_threshold);
        if !self.per_tag.is_empty() {
            let width = self
                .per_tag
                .iter()
                .map(|t| t.tag.len())
                .max()
                .unwrap_or(0)
                .max(3);
            let _ = writeln!(out, "{:<width$}  {:>7}  {:>8}", "tag", "samples", "Acc(%)");
            for t in &self.per_tag {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>7}  {:>8.2}",
                    t.tag,
                    t.samples,
                    100.0 * t.accuracy
                );
            }
        }
        out
    }

    /// One `key=value` per line, full precision.
    pub fn to_key_value(&self) -> String {
        let c = &self.confusion;
        let mut out = String::new();
        for (k, v) in [
            ("samples", self.samples.to_string()),
            ("threshold", self.threshold.to_string()),
            ("accuracy", self.accuracy.to_string()),
            ("auc", self.auc.to_string()),
            ("eer", self.eer.to_string()),
            ("eer_threshold", self.eer_threshold.to_string()),
            ("true_positives", c.true_positives.to_string()),
            ("false_positives", c.false_positives.to_string()),
            ("true_negatives", c.true_negatives.to_string()),
            ("false_negatives", c.false_negatives.to_string()),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        for t in &self.per_tag {
            let _ = writeln!(out, "tag.{}.samples={}", t.tag, t.samples);
            let _ = writeln!(out, "tag.{}.accuracy={}", t.tag, t.accuracy);
        }
        out
    }

    /// Two whitespace-separated columns, `fpr tpr`, one point per line.
    pub fn roc_text(&self) -> String {
        let mut out = String::from("# fpr tpr\n");
        for (x, y) in &self.roc {
            let _ = writeln!(out, "{x} {y}");
        }
        out
    }
}
