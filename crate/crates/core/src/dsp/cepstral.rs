use serde::{Deserialize, Serialize};

use super::{
    build_filterbank, frame_samples, power_spectrum_with, Dct2, FftPlan, Filterbank, FrameConfig,
    Scale, Window,
};
use crate::audio_io::{resample, AudioClip};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Lfcc,
}

impl FeatureKind {
    pub fn tag(self) -> u8 {
        match self {
            FeatureKind::Mfcc => 0,
            FeatureKind::Lfcc => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FeatureKind::Mfcc),
            1 => Ok(FeatureKind::Lfcc),
            t => Err(Error::UnknownKind(t)),
        }
    }

    /// Conventional layout: MFCC is coefficient x time, LFCC is time x coefficient.
    pub fn default_axes(self) -> (Axis, Axis) {
        match self {
            FeatureKind::Mfcc => (Axis::Coefficient, Axis::Time),
            FeatureKind::Lfcc => (Axis::Time, Axis::Coefficient),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Lfcc => "lfcc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Coefficient,
    Time,
}

/// Row-major matrix of cepstral coefficients with axis semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    kind: FeatureKind,
    axes: (Axis, Axis),
}

impl FeatureMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f32>,
        kind: FeatureKind,
        axes: (Axis, Axis),
    ) -> Result<Self> {
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::Dimension(format!(
                "{rows} x {cols} matrix given {} values",
                values.len()
            )));
        }
        if axes.0 == axes.1 {
            return Err(Error::Config("feature axes must differ".into()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            kind,
            axes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn axes(&self) -> (Axis, Axis) {
        self.axes
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }
}

/// Shared configuration for both cepstral front-ends. The extractor resamples
/// to `sample_rate` before framing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CepstralConfig {
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub scale: Scale,
    pub n_filters: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl CepstralConfig {
    /// 22.05 kHz, 2048-point FFT, hop 512, centered hann, 128 mel filters,
    /// 20 coefficients: 44 frames per second.
    pub fn mfcc_default() -> Self {
        Self {
            sample_rate: 22050,
            frame: FrameConfig {
                n_fft: 2048,
                hop: 512,
                win_length: 2048,
                window: Window::Hann,
                centered: true,
            },
            scale: Scale::Mel,
            n_filters: 128,
            fmin: 0.0,
            fmax: 11025.0,
            n_coeffs: 20,
            log_floor: 1e-10,
        }
    }

    /// 16 kHz, 512-point FFT, 25 ms hamming window, 10 ms hop, 24 linear
    /// filters, 13 coefficients.
    pub fn lfcc_default() -> Self {
        Self {
            sample_rate: 16000,
            frame: FrameConfig {
                n_fft: 512,
                hop: 160,
                win_length: 400,
                window: Window::Hamming,
                centered: false,
            },
            scale: Scale::Linear,
            n_filters: 24,
            fmin: 0.0,
            fmax: 8000.0,
            n_coeffs: 13,
            log_floor: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.n_coeffs == 0 || self.n_coeffs > self.n_filters {
            return Err(Error::Config(format!(
                "n_coeffs {} must be in 1..={}",
                self.n_coeffs, self.n_filters
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(())
    }
}

/// Frames -> power spectrum -> filterbank -> log -> DCT-II, with every table
/// built once. Immutable after construction, so one extractor can serve many
/// threads.
#[derive(Debug, Clone)]
pub struct CepstralExtractor {
    cfg: CepstralConfig,
    kind: FeatureKind,
    plan: FftPlan,
    filterbank: Filterbank,
    dct: Dct2,
}

impl CepstralExtractor {
    pub fn new(kind: FeatureKind, cfg: CepstralConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = FftPlan::new(cfg.frame.n_fft)?;
        let filterbank = build_filterbank(
            cfg.n_filters,
            cfg.frame.n_fft,
            cfg.sample_rate,
            cfg.fmin,
            cfg.fmax,
            cfg.scale,
        )?;
        let dct = Dct2::new(cfg.n_filters, cfg.n_coeffs)?;
        Ok(Self {
            cfg,
            kind,
            plan,
            filterbank,
            dct,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn config(&self) -> &CepstralConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &Filterbank {
        &self.filterbank
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let clip = resample(clip, self.cfg.sample_rate)?;
        let frames = frame_samples(clip.samples(), &self.cfg.frame)?;
        let n_frames = frames.n_frames();
        let n_coeffs = self.cfg.n_coeffs;

        // time-major scratch: one row of coefficients per frame
        let mut coeffs = Vec::with_capacity(n_frames * n_coeffs);
        for frame in frames.iter() {
            let power = power_spectrum_with(&self.plan, frame);
            let log_energy: Vec<f64> = self
                .filterbank
                .apply(&power)
                .into_iter()
                .map(|e| e.max(self.cfg.log_floor).ln())
                .collect();
            coeffs.extend(self.dct.forward(&log_energy));
        }

        let axes = self.kind.default_axes();
        let (rows, cols, values) = match axes.0 {
            Axis::Time => (
                n_frames,
                n_coeffs,
                coeffs.iter().map(|&v| v as f32).collect(),
            ),
            Axis::Coefficient => {
                let mut values = vec![0f32; n_frames * n_coeffs];
                for t in 0..n_frames {
                    for k in 0..n_coeffs {
                        values[k * n_frames + t] = coeffs[t * n_coeffs + k] as f32;
                    }
                }
                (n_coeffs, n_frames, values)
            }
        };
        FeatureMatrix::new(rows, cols, values, self.kind, axes)
    }
}

/// MFCC, coefficient-major (`n_coeffs x n_frames`).
pub fn extract_mfcc(clip: &AudioClip, cfg: &CepstralConfig) -> Result<FeatureMatrix> {
    CepstralExtractor::new(FeatureKind::Mfcc, *cfg)?.extract(clip)
}

/// LFCC, time-major (`n_frames x n_coeffs`).
pub fn extract_lfcc(clip: &AudioClip, cfg: &CepstralConfig) -> Result<FeatureMatrix> {
    CepstralExtractor::new(FeatureKind::Lfcc, *cfg)?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, sr: u32, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), sr).unwrap()
    }

    #[test]
    fn mfcc_shape() {
        for sr in [16000, 22050, 44100] {
            let m =
                extract_mfcc(&noise(sr as usize, sr, 1), &CepstralConfig::mfcc_default()).unwrap();
            assert_eq!(m.shape(), (20, 44));
            assert_eq!(m.kind(), FeatureKind::Mfcc);
            assert_eq!(m.axes(), (Axis::Coefficient, Axis::Time));
        }
    }

    #[test]
    fn lfcc_shape() {
        let m = extract_lfcc(&noise(16000, 16000, 2), &CepstralConfig::lfcc_default()).unwrap();
        assert_eq!(m.shape(), (98, 13));
        assert_eq!(m.axes(), (Axis::Time, Axis::Coefficient));
    }

    #[test]
    fn silence_gives_flat_cepstrum() {
        let floor = 1e-10f64.ln();
        let silent = AudioClip::new(vec![0.0; 16000], 16000).unwrap();

        let m = extract_mfcc(&silent, &CepstralConfig::mfcc_default()).unwrap();
        let c0 = (floor * (128f64).sqrt()) as f32;
        for t in 0..m.cols() {
            assert!((m.get(0, t) - c0).abs() < 1e-3);
            for k in 1..m.rows() {
                assert!(m.get(k, t).abs() < 1e-4);
            }
        }

        let l = extract_lfcc(&silent, &CepstralConfig::lfcc_default()).unwrap();
        let c0 = (floor * (24f64).sqrt()) as f32;
        for t in 0..l.rows() {
            assert!((l.get(t, 0) - c0).abs() < 1e-3);
            for k in 1..l.cols() {
                assert!(l.get(t, k).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn hop_shift_shifts_columns() {
        let mut cfg = CepstralConfig::lfcc_default();
        cfg.frame.centered = false;
        let hop = cfg.frame.hop;
        let base = noise(16000 + hop, 16000, 5);
        let a = AudioClip::new(base.samples()[..16000].to_vec(), 16000).unwrap();
        let b = AudioClip::new(base.samples()[hop..].to_vec(), 16000).unwrap();
        let fa = extract_lfcc(&a, &cfg).unwrap();
        let fb = extract_lfcc(&b, &cfg).unwrap();
        for t in 0..fa.rows() - 1 {
            assert_eq!(fa.row(t + 1), fb.row(t));
        }
    }

    #[test]
    fn deterministic_and_finite() {
        let clip = noise(22050, 22050, 9);
        let cfg = CepstralConfig::mfcc_default();
        let a = extract_mfcc(&clip, &cfg).unwrap();
        let b = extract_mfcc(&clip, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| v.is_finite()));

        let loud = AudioClip::new(vec![1.0; 16000], 16000).unwrap();
        let l = extract_lfcc(&loud, &CepstralConfig::lfcc_default()).unwrap();
        assert!(l.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_config_propagates() {
        let mut cfg = CepstralConfig::lfcc_default();
        cfg.fmax = 9000.0;
        assert!(extract_lfcc(&noise(16000, 16000, 1), &cfg).is_err());
        let mut cfg = CepstralConfig::lfcc_default();
        cfg.n_coeffs = 30;
        assert!(extract_lfcc(&noise(16000, 16000, 1), &cfg).is_err());
    }
}
