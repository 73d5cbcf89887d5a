use crate::error::{Error, Result};

/// Orthonormal DCT-II with a precomputed `n_out x n` basis.
#[derive(Debug, Clone)]
pub struct Dct2 {
    n: usize,
    n_out: usize,
    basis: Vec<f64>,
}

impl Dct2 {
    pub fn new(n: usize, n_out: usize) -> Result<Self> {
        if n == 0 || n_out > n {
            return Err(Error::Config(format!(
                "DCT output length {n_out} must be <= input length {n} (n > 0)"
            )));
        }
        let mut basis = vec![0.0; n_out * n];
        let s0 = (1.0 / n as f64).sqrt();
        let sk = (2.0 / n as f64).sqrt();
        for k in 0..n_out {
            let s = if k == 0 { s0 } else { sk };
            for j in 0..n {
                let arg = std::f64::consts::PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64;
                basis[k * n + j] = s * arg.cos();
            }
        }
        Ok(Self { n, n_out, basis })
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "DCT input length mismatch");
        self.basis
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Transpose application (DCT-III); the exact inverse when `n_out == n`.
    pub fn transpose(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n_out, "DCT coefficient length mismatch");
        let mut out = vec![0.0; self.n];
        for (row, &ck) in self.basis.chunks_exact(self.n).zip(c) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += ck * b;
            }
        }
        out
    }
}

/// `c[k] = s(k) * sum_j v[j] cos(pi k (2j + 1) / 2n)` for `k < n_out`.
pub fn dct2(v: &[f64], n_out: usize) -> Result<Vec<f64>> {
    Ok(Dct2::new(v.len(), n_out)?.forward(v))
}
