//! Canonical-grid alignment, masking augmentation, and the `AFFD` feature file.

mod format;
mod mask;

pub use format::{
    decode_feature, encode_feature, read_feature, write_feature, FEATURE_HEADER_LEN, FEATURE_MAGIC,
    FEATURE_VERSION,
};
pub use mask::{apply_mask, mask_feature, MaskAxis, MaskSpec};

use crate::dsp::{FeatureKind, FeatureMatrix};

pub const GRID_ROWS: usize = 136;
pub const GRID_COLS: usize = 44;

/// Where the raw matrix sits inside the grid (`row`, `col`, `rows`, `cols`)
/// and which source offset was copied when the input had to be cropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub src_row: usize,
    pub src_col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaddedFeature {
    values: Vec<f32>,
    rows: usize,
    cols: usize,
    kind: FeatureKind,
    placement: Placement,
}

impl PaddedFeature {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    /// Grid offset of the embedded matrix.
    pub fn origin(&self) -> (usize, usize) {
        (self.placement.row, self.placement.col)
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    /// Copies the embedded region back out.
    pub fn embedded(&self) -> Vec<f32> {
        let p = self.placement;
        let mut out = Vec::with_capacity(p.rows * p.cols);
        for r in p.row..p.row + p.rows {
            out.extend_from_slice(
                &self.values[r * self.cols + p.col..r * self.cols + p.col + p.cols],
            );
        }
        out
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }
}

// Leading/trailing split: odd remainders go to the trailing side.
fn center(len: usize, target: usize) -> (usize, usize, usize) {
    if len <= target {
        ((target - len) / 2, 0, len)
    } else {
        (0, (len - target) / 2, target)
    }
}

/// Embeds `m` centrally in a zero grid of `target_rows x target_cols`.
/// Oversized axes are center-cropped.
pub fn pad_center_to(m: &FeatureMatrix, target_rows: usize, target_cols: usize) -> PaddedFeature {
    let (row, src_row, rows) = center(m.rows(), target_rows);
    let (col, src_col, cols) = center(m.cols(), target_cols);
    let mut values = vec![0f32; target_rows * target_cols];
    for r in 0..rows {
        let src = &m.row(src_row + r)[src_col..src_col + cols];
        let dst = (row + r) * target_cols + col;
        values[dst..dst + cols].copy_from_slice(src);
    }
    PaddedFeature {
        values,
        rows: target_rows,
        cols: target_cols,
        kind: m.kind(),
        placement: Placement {
            row,
            col,
            rows,
            cols,
            src_row,
            src_col,
        },
    }
}

/// [`pad_center_to`] on the canonical 136 x 44 grid.
pub fn pad_center(m: &FeatureMatrix) -> PaddedFeature {
    pad_center_to(m, GRID_ROWS, GRID_COLS)
}
