use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PaddedFeature;
use crate::dsp::{Axis, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskAxis {
    Time,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub axis: MaskAxis,
    pub fraction: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub const DEFAULT_FRACTION: f64 = 0.07;

    pub fn new(axis: MaskAxis, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!(
                "mask fraction {fraction} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            axis,
            fraction,
            seed,
        })
    }

    pub fn band_width(&self, axis_len: usize) -> usize {
        (self.fraction * axis_len as f64).floor() as usize
    }
}

/// Overwrites a contiguous band of lines with each line's own mean.
/// `lines_are_rows` selects whether a line is a row or a column.
fn mask_lines(
    values: &mut [f32],
    rows: usize,
    cols: usize,
    lines_are_rows: bool,
    spec: &MaskSpec,
) -> Option<Range<usize>> {
    let (n_lines, line_len) = if lines_are_rows {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let width = spec.band_width(n_lines);
    if width == 0 || line_len == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = rng.random_range(0..=n_lines - width);
    let band = start..start + width;
    for line in band.clone() {
        let index = |i: usize| {
            if lines_are_rows {
                line * cols + i
            } else {
                i * cols + line
            }
        };
        let sum: f64 = (0..line_len).map(|i| values[index(i)] as f64).sum();
        let mean = (sum / line_len as f64) as f32;
        for i in 0..line_len {
            values[index(i)] = mean;
        }
    }
    Some(band)
}

/// Masks a padded grid: frequency masks select rows, time masks select columns.
pub fn apply_mask(p: &PaddedFeature, spec: &MaskSpec) -> PaddedFeature {
    let mut out = p.clone();
    let (rows, cols) = (out.rows(), out.cols());
    mask_lines(
        out.values_mut(),
        rows,
        cols,
        spec.axis == MaskAxis::Frequency,
        spec,
    );
    out
}

/// Masks a raw feature matrix along the axis its tags name: frequency masks
/// select coefficient lines, time masks select frames.
pub fn mask_feature(m: &FeatureMatrix, spec: &MaskSpec) -> FeatureMatrix {
    let mut out = m.clone();
    let target = match spec.axis {
        MaskAxis::Frequency => Axis::Coefficient,
        MaskAxis::Time => Axis::Time,
    };
    let lines_are_rows = m.axes().0 == target;
    let (rows, cols) = m.shape();
    mask_lines(out.values_mut(), rows, cols, lines_are_rows, spec);
    out
}
