use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// HTK mel: `2595 * log10(1 + f / 700)`.
    Mel,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToScale,
    ToHz,
}

pub fn hz_to_scale(hz: f64, scale: Scale) -> Result<f64> {
    if hz < 0.0 || hz.is_nan() {
        return Err(Error::Domain(format!("frequency {hz} Hz is negative")));
    }
    Ok(match scale {
        Scale::Linear => hz,
        Scale::Mel => 2595.0 * (1.0 + hz / 700.0).log10(),
    })
}

pub fn scale_to_hz(value: f64, scale: Scale) -> Result<f64> {
    if value < 0.0 || value.is_nan() {
        return Err(Error::Domain(format!("scale value {value} is negative")));
    }
    Ok(match scale {
        Scale::Linear => value,
        Scale::Mel => 700.0 * (10f64.powf(value / 2595.0) - 1.0),
    })
}

pub fn scale_convert(value: f64, scale: Scale, direction: Direction) -> Result<f64> {
    match direction {
        Direction::ToScale => hz_to_scale(value, scale),
        Direction::ToHz => scale_to_hz(value, scale),
    }
}

/// Bank of unit-peak triangular filters over the `n_fft / 2 + 1` power bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    weights: Vec<f64>,
    n_filters: usize,
    n_bins: usize,
    scale: Scale,
    fmin: f64,
    fmax: f64,
    breakpoints_hz: Vec<f64>,
}

impl Filterbank {
    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn fmin(&self) -> f64 {
        self.fmin
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    /// The `n_filters + 2` filter edges in Hz.
    pub fn breakpoints_hz(&self) -> &[f64] {
        &self.breakpoints_hz
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_bins..(i + 1) * self.n_bins]
    }

    /// Filter energies `E[i] = sum_k w[i][k] * power[k]`.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        assert_eq!(power.len(), self.n_bins, "power spectrum length mismatch");
        self.weights
            .chunks_exact(self.n_bins)
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn build_filterbank(
    n_filters: usize,
    n_fft: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
    scale: Scale,
) -> Result<Filterbank> {
    if n_filters == 0 {
        return Err(Error::Config("filterbank needs at least one filter".into()));
    }
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(Error::Config(format!(
            "n_fft {n_fft} is not a power of two"
        )));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if fmax > nyquist {
        return Err(Error::Config(format!(
            "fmax {fmax} Hz exceeds Nyquist {nyquist} Hz"
        )));
    }
    if fmin.is_nan() || fmin < 0.0 || fmin >= fmax {
        return Err(Error::Config(format!(
            "need 0 <= fmin < fmax, got fmin {fmin} fmax {fmax}"
        )));
    }

    let lo = hz_to_scale(fmin, scale)?;
    let hi = hz_to_scale(fmax, scale)?;
    let step = (hi - lo) / (n_filters + 1) as f64;
    let mut breakpoints_hz = (0..n_filters + 2)
        .map(|i| scale_to_hz(lo + step * i as f64, scale))
        .collect::<Result<Vec<_>>>()?;
    // Pin the ends to the exact requested band.
    breakpoints_hz[0] = fmin;
    breakpoints_hz[n_filters + 1] = fmax;

    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = vec![0.0; n_filters * n_bins];
    for (i, row) in weights.chunks_exact_mut(n_bins).enumerate() {
        let (left, center, right) = (
            breakpoints_hz[i],
            breakpoints_hz[i + 1],
            breakpoints_hz[i + 2],
        );
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
        }
    }

    Ok(Filterbank {
        weights,
        n_filters,
        n_bins,
        scale,
        fmin,
        fmax,
        breakpoints_hz,
    })
}
