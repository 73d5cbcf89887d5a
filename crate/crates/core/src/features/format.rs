//! `AFFD` feature files.
//!
//! ```text
//! offset size  field
//! 0      4     magic "AFFD"
//! 4      1     format version (1)
//! 5      1     kind (0 = MFCC, 1 = LFCC)
//! 6      2     reserved, zero
//! 8      4     rows (u32 LE)
//! 12     4     cols (u32 LE)
//! 16     4*r*c row-major f32 LE payload
//! ```

use std::fs;
use std::path::Path;

use crate::dsp::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"AFFD";
pub const FEATURE_VERSION: u8 = 1;
pub const FEATURE_HEADER_LEN: usize = 16;

// 1 GiB of f32 payload.
const MAX_ELEMENTS: u64 = 1 << 28;

pub fn encode_feature(kind: FeatureKind, rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(rows * cols, values.len(), "payload does not match shape");
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + values.len() * 4);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.push(FEATURE_VERSION);
    out.push(kind.tag());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a feature file; axes take the kind's conventional layout.
pub fn decode_feature(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::Truncated {
            expected: FEATURE_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            expected: FEATURE_MAGIC,
            found: magic,
        });
    }
    if bytes[4] != FEATURE_VERSION {
        return Err(Error::BadVersion(bytes[4] as u32));
    }
    let kind = FeatureKind::from_tag(bytes[5])?;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as u64;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as u64;
    if rows * cols > MAX_ELEMENTS {
        return Err(Error::DimensionOverflow { rows, cols });
    }
    let n = (rows * cols) as usize;
    let payload = &bytes[FEATURE_HEADER_LEN..];
    if payload.len() < n * 4 {
        return Err(Error::Truncated {
            expected: FEATURE_HEADER_LEN + n * 4,
            found: bytes.len(),
        });
    }
    if payload.len() > n * 4 {
        return Err(Error::TrailingData(payload.len() - n * 4));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMatrix::new(
        rows as usize,
        cols as usize,
        values,
        kind,
        kind.default_axes(),
    )
}

pub fn write_feature(
    path: impl AsRef<Path>,
    kind: FeatureKind,
    rows: usize,
    cols: usize,
    values: &[f32],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature(kind, rows, cols, values)).map_err(|e| Error::io(path, e))
}

pub fn read_feature(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature(&bytes).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn padded_grid_file_size() {
        let bytes = encode_feature(FeatureKind::Mfcc, 136, 44, &vec![0.5; 136 * 44]);
        assert_eq!(bytes.len(), 23952);
        assert_eq!(&bytes[..8], b"AFFD\x01\x00\x00\x00");
        assert_eq!(&bytes[8..12], &136u32.to_le_bytes());
    }

    #[test]
    fn decode_errors_are_distinct() {
        let good = encode_feature(FeatureKind::Lfcc, 2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_feature(&bad), Err(Error::BadMagic { .. })));

        assert!(matches!(
            decode_feature(&good[..good.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode_feature(&good[..10]),
            Err(Error::Truncated { .. })
        ));

        let mut big = good.clone();
        big[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        big[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            decode_feature(&big),
            Err(Error::DimensionOverflow { .. })
        ));

        let mut kind = good.clone();
        kind[5] = 9;
        assert!(matches!(decode_feature(&kind), Err(Error::UnknownKind(9))));

        let mut long = good;
        long.push(0);
        assert!(matches!(decode_feature(&long), Err(Error::TrailingData(1))));
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..12, cols in 0usize..12, lfcc in any::<bool>(), seed in any::<u32>()) {
            let kind = if lfcc { FeatureKind::Lfcc } else { FeatureKind::Mfcc };
            let values: Vec<f32> = (0..rows * cols)
                .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 * 1e-3 - 7.0)
                .collect();
            let m = decode_feature(&encode_feature(kind, rows, cols, &values)).unwrap();
            prop_assert_eq!(m.shape(), (rows, cols));
            prop_assert_eq!(m.kind(), kind);
            prop_assert_eq!(m.values(), values.as_slice());
        }
    }
}
