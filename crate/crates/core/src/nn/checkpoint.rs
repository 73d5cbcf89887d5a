//! `AFFC` checkpoints.
//!
//! ```text
//! magic "AFFC" | version u32 | config digest [32] (SHA-256 of the config JSON)
//! | config_len u32 | config JSON (UTF-8) | n_tensors u32
//! | per tensor: name_len u16 | name (UTF-8) | ndim u8 | dims u32 * ndim | f32 payload
//! ```
//! All integers and floats little-endian. Buffers (batch-norm running
//! statistics) are stored alongside trainable tensors.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Module, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AFFC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub type ConfigDigest = [u8; 32];

pub fn config_digest(config_json: &str) -> ConfigDigest {
    Sha256::digest(config_json.as_bytes()).into()
}

pub fn digest_hex(d: &ConfigDigest) -> String {
    hex::encode(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 4],
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub digest: ConfigDigest,
    pub config_json: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn capture<T: Real>(module: &mut dyn Module<T>, config_json: &str) -> Self {
        let mut tensors = Vec::new();
        module.visit("", &mut |name, t, _| {
            tensors.push(NamedTensor {
                name: name.to_string(),
                shape: t.shape(),
                values: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
        });
        Self {
            digest: config_digest(config_json),
            config_json: config_json.to_string(),
            tensors,
        }
    }

    /// Fails with the digest pair if `expected` differs from the stored digest.
    pub fn verify_digest(&self, expected: &ConfigDigest) -> Result<()> {
        if &self.digest != expected {
            return Err(Error::DigestMismatch {
                checkpoint: digest_hex(&self.digest),
                data: digest_hex(expected),
            });
        }
        Ok(())
    }

    /// Writes stored values into `module`. Every tensor name must match in
    /// both directions, with identical shapes.
    pub fn restore<T: Real>(&self, module: &mut dyn Module<T>) -> Result<()> {
        let mut by_name: HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut err = None;
        module.visit("", &mut |name, t, _| {
            if err.is_some() {
                return;
            }
            match by_name.remove(name) {
                None => err = Some(Error::Checkpoint(format!("tensor `{name}` missing"))),
                Some(s) if s.shape != t.shape() => {
                    err = Some(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, model expects {:?}",
                        s.shape,
                        t.shape()
                    )))
                }
                Some(s) => {
                    for (d, &v) in t.data_mut().iter_mut().zip(&s.values) {
                        *d = T::lit(v as f64);
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!(
                "checkpoint tensor `{extra}` not present in model"
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(4);
            for d in t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::BadVersion(version));
        }
        let digest: ConfigDigest = r.take(32)?.try_into().expect("32 bytes");
        let len = r.u32()? as usize;
        let config_json = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        if config_digest(&config_json) != digest {
            return Err(Error::DigestMismatch {
                checkpoint: digest_hex(&digest),
                data: digest_hex(&config_digest(&config_json)),
            });
        }
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let ndim = r.take(1)?[0] as usize;
            if ndim == 0 || ndim > 4 {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has {ndim} dims"
                )));
            }
            let mut shape = [1usize; 4];
            for d in shape.iter_mut().skip(4 - ndim) {
                *d = r.u32()? as usize;
            }
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&c| c <= (1 << 28))
                .ok_or(Error::DimensionOverflow {
                    rows: shape[0] as u64,
                    cols: (shape[1] * shape[2] * shape[3]) as u64,
                })?;
            let values = r
                .take(count * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor {
                name,
                shape,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::TrailingData(bytes.len() - r.pos));
        }
        Ok(Self {
            digest,
            config_json,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.at(path))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
