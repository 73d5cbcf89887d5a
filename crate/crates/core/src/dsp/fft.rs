use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal permutation for an iterative
/// radix-2 decimation-in-time FFT of one fixed size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!("FFT size {n} is not a power of two")));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        // Direct evaluation per twiddle; a running product would drift.
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        Ok(Self {
            n,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn process(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length must equal plan size");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let stride = self.n / size;
            for start in (0..self.n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }

    /// Transforms a real signal zero-padded to the plan size.
    pub fn forward_real(&self, signal: &[f64]) -> Vec<Complex64> {
        assert!(signal.len() <= self.n, "signal longer than FFT size");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (b, &x) in buf.iter_mut().zip(signal) {
            b.re = x;
        }
        self.process(&mut buf);
        buf
    }
}

/// `X[k] = sum_t x[t] exp(-2 pi i k t / n)` for a real signal zero-padded to `n`.
pub fn fft(signal: &[f64], n: usize) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(n)?;
    if signal.len() > n {
        return Err(Error::Config(format!(
            "signal of length {} does not fit FFT size {n}",
            signal.len()
        )));
    }
    Ok(plan.forward_real(signal))
}
