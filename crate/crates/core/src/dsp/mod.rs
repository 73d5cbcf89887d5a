//! Spectral front-end: framing, windows, FFT, triangular filterbanks, DCT-II,
//! and the MFCC / LFCC extractors built from them.

mod cepstral;
mod dct;
mod fft;
mod filterbank;

pub use cepstral::{
    extract_lfcc, extract_mfcc, Axis, CepstralConfig, CepstralExtractor, FeatureKind, FeatureMatrix,
};
pub use dct::{dct2, Dct2};
pub use fft::{fft, FftPlan};
pub use filterbank::{
    build_filterbank, hz_to_scale, scale_convert, scale_to_hz, Direction, Filterbank, Scale,
};

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Hamming,
    Rect,
}

impl Window {
    /// Symmetric window of `len` points; both hann endpoints are zero.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|i| {
                let c = (2.0 * std::f64::consts::PI * i as f64 / denom).cos();
                match self {
                    Window::Hann => 0.5 - 0.5 * c,
                    Window::Hamming => 0.54 - 0.46 * c,
                    Window::Rect => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub window: Window,
    /// Reflect-pad the signal by `n_fft / 2` on both sides.
    pub centered: bool,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_fft {} is not a power of two",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Config(format!(
                "hop {} must be in 1..={}",
                self.hop, self.n_fft
            )));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Config(format!(
                "win_length {} must be in 1..={}",
                self.win_length, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if self.centered {
            1 + len / self.hop
        } else if len < self.win_length {
            0
        } else {
            1 + (len - self.win_length) / self.hop
        }
    }
}

/// Row-major `n_frames x n_fft` block of windowed frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    n_frames: usize,
    n_fft: usize,
    data: Vec<f64>,
}

impl Frames {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_fft..(i + 1) * self.n_fft]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_fft)
    }
}

// Mirror index without repeating the edge sample, folded until in range.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

pub fn frame_signal(clip: &AudioClip, cfg: &FrameConfig) -> Result<Frames> {
    frame_samples(clip.samples(), cfg)
}

pub(crate) fn frame_samples(samples: &[f32], cfg: &FrameConfig) -> Result<Frames> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyFrame {
            len: 0,
            win_length: cfg.win_length,
        });
    }
    let len = samples.len();
    let n_frames = cfg.n_frames(len);
    if n_frames == 0 {
        return Err(Error::EmptyFrame {
            len,
            win_length: cfg.win_length,
        });
    }
    let window = cfg.window.coefficients(cfg.win_length);
    let mut data = vec![0.0; n_frames * cfg.n_fft];
    for (t, frame) in data.chunks_exact_mut(cfg.n_fft).enumerate() {
        if cfg.centered {
            let pad = (cfg.n_fft / 2) as isize;
            let offset = (cfg.n_fft - cfg.win_length) / 2;
            let start = (t * cfg.hop) as isize - pad + offset as isize;
            for (k, w) in window.iter().enumerate() {
                let idx = reflect_index(start + k as isize, len);
                frame[offset + k] = samples[idx] as f64 * w;
            }
        } else {
            let start = t * cfg.hop;
            for (k, w) in window.iter().enumerate() {
                frame[k] = samples[start + k] as f64 * w;
            }
        }
    }
    Ok(Frames {
        n_frames,
        n_fft: cfg.n_fft,
        data,
    })
}

/// `P[k] = |X[k]|^2` for `k = 0..=n_fft/2`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    if frame.len() != n_fft {
        return Err(Error::Dimension(format!(
            "frame length {} != n_fft {n_fft}",
            frame.len()
        )));
    }
    let plan = FftPlan::new(n_fft)?;
    Ok(power_spectrum_with(&plan, frame))
}

pub(crate) fn power_spectrum_with(plan: &FftPlan, frame: &[f64]) -> Vec<f64> {
    let spec = plan.forward_real(frame);
    spec[..plan.len() / 2 + 1]
        .iter()
        .map(|c| c.norm_sqr())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(samples: Vec<f32>, sr: u32) -> AudioClip {
        AudioClip::new(samples, sr).unwrap()
    }

    #[test]
    fn centered_frame_count() {
        let cfg = FrameConfig {
            n_fft: 2048,
            hop: 512,
            win_length: 2048,
            window: Window::Hann,
            centered: true,
        };
        let frames = frame_signal(&clip(vec![0.1; 22050], 22050), &cfg).unwrap();
        assert_eq!(frames.n_frames(), 44);
        assert_eq!(frames.n_fft(), 2048);
    }

    #[test]
    fn rect_single_frame_equals_signal() {
        let x: Vec<f32> = (0..8).map(|i| i as f32 / 10.0).collect();
        let cfg = FrameConfig {
            n_fft: 8,
            hop: 4,
            win_length: 8,
            window: Window::Rect,
            centered: false,
        };
        let frames = frame_signal(&clip(x.clone(), 8000), &cfg).unwrap();
        assert_eq!(frames.n_frames(), 1);
        let expect: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        assert_eq!(frames.frame(0), expect.as_slice());
    }

    #[test]
    fn hann_endpoints_zero() {
        let cfg = FrameConfig {
            n_fft: 16,
            hop: 16,
            win_length: 16,
            window: Window::Hann,
            centered: false,
        };
        let frames = frame_signal(&clip(vec![0.9; 16], 8000), &cfg).unwrap();
        assert_eq!(frames.frame(0)[0], 0.0);
        assert!(frames.frame(0)[15].abs() < 1e-15);
    }

    #[test]
    fn non_centered_requires_full_window() {
        let cfg = FrameConfig {
            n_fft: 512,
            hop: 160,
            win_length: 400,
            window: Window::Hamming,
            centered: false,
        };
        let err = frame_signal(&clip(vec![0.0; 300], 16000), &cfg).unwrap_err();
        assert!(matches!(err, Error::EmptyFrame { len: 300, .. }));
        let frames = frame_signal(&clip(vec![0.0; 16000], 16000), &cfg).unwrap();
        assert_eq!(frames.n_frames(), 98);
    }

    #[test]
    fn bad_frame_configs() {
        let mut cfg = FrameConfig {
            n_fft: 500,
            hop: 100,
            win_length: 400,
            window: Window::Hann,
            centered: false,
        };
        assert!(cfg.validate().is_err());
        cfg.n_fft = 512;
        cfg.hop = 0;
        assert!(cfg.validate().is_err());
        cfg.hop = 100;
        cfg.win_length = 600;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn reflect_padding_mirrors() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(-6, 5), 2);
        assert_eq!(reflect_index(3, 1), 0);
    }

    #[test]
    fn power_spectrum_basics() {
        assert!(power_spectrum(&[0.0; 8], 8)
            .unwrap()
            .iter()
            .all(|&p| p == 0.0));
        let mut imp = vec![0.0; 8];
        imp[0] = 1.0;
        let p = power_spectrum(&imp, 8).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(power_spectrum(&imp, 16).is_err());
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 512;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = power_spectrum(&x, n).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let inner: f64 = p[1..n / 2].iter().sum();
        let freq = (p[0] + 2.0 * inner + p[n / 2]) / n as f64;
        assert!((time - freq).abs() / time < 1e-6);
    }
}
