//! Seeded two-class corpus of voiced-speech stand-ins.
//!
//! Both classes share one recipe: a vibrato harmonic stack under a syllabic
//! envelope plus a white noise floor. Fake clips add artifacts on top of it.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::manifest::{Manifest, ManifestEntry, Split};
use crate::audio_io::{write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::metrics::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactMode {
    /// Tones in 6-7.5 kHz plus phase discontinuities in the harmonic stack.
    HighBand,
    /// Each fake clip carries either low-band subharmonics or the high-band
    /// tones, never both.
    SplitBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub duration_secs: f64,
    pub sample_rate: u32,
    /// Train, test and eval fractions; must sum to 1.
    pub split: [f64; 3],
    pub artifacts: ArtifactMode,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_class: 10,
            duration_secs: 1.0,
            sample_rate: 16000,
            split: [0.7, 0.15, 0.15],
            artifacts: ArtifactMode::HighBand,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Config("n_per_class must be positive".into()));
        }
        if !(self.duration_secs >= 1.0) {
            return Err(Error::Config(format!(
                "clip duration {} s is under one second",
                self.duration_secs
            )));
        }
        if self.sample_rate < 16000 {
            return Err(Error::Config(format!(
                "sample rate {} cannot hold the 6-7.5 kHz artifact band",
                self.sample_rate
            )));
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions {:?} must be in [0, 1] and sum to 1",
                self.split
            )));
        }
        Ok(())
    }

    /// Per-class counts for train, test and eval. Rounding remainders go to eval.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.n_per_class;
        let train = ((self.split[0] * n as f64).round() as usize).min(n);
        let test = ((self.split[1] * n as f64).round() as usize).min(n - train);
        [train, test, n - train - test]
    }
}

/// One generated clip and where it belongs.
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub clip: AudioClip,
    pub label: Label,
    pub split: Split,
    pub source_tag: String,
    pub index: usize,
}

impl SynthClip {
    pub fn file_name(&self) -> String {
        format!("{}_{:05}.wav", self.label, self.index)
    }
}

const HIGH_BAND: (f64, f64) = (6000.0, 7500.0);

struct Voice {
    f0: f64,
    vibrato_rate: f64,
    vibrato_depth: f64,
    envelope_rate: f64,
    envelope_phase: f64,
    harmonics: Vec<(f64, f64)>,
}

impl Voice {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let f0 = rng.random_range(90.0..260.0);
        let n_harm = (4000.0 / f0) as usize;
        let harmonics = (1..=n_harm)
            .map(|k| {
                (
                    rng.random_range(0.5..1.0) / k as f64,
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        Self {
            f0,
            vibrato_rate: rng.random_range(3.0..6.0),
            vibrato_depth: rng.random_range(0.005..0.02),
            envelope_rate: rng.random_range(2.0..5.0),
            envelope_phase: rng.random_range(0.0..TAU),
            harmonics,
        }
    }

    /// Harmonic stack normalised to peak 0.5. `jumps` are sample indices at
    /// which the fundamental phase jumps by a random offset.
    fn render(&self, n: usize, sr: f64, jumps: &[(usize, f64)]) -> Vec<f64> {
        let mut phase = 0.0;
        let mut jump = jumps.iter().peekable();
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                while let Some(&&(at, offset)) = jump.peek() {
                    if at > i {
                        break;
                    }
                    phase += offset;
                    jump.next();
                }
                let f = self.f0 * (1.0 + self.vibrato_depth * (TAU * self.vibrato_rate * t).sin());
                phase += TAU * f / sr;
                let env = 0.6 + 0.4 * (TAU * self.envelope_rate * t + self.envelope_phase).sin();
                env * self
                    .harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, p))| a * ((k + 1) as f64 * phase + p).sin())
                    .sum::<f64>()
            })
            .collect();
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
        out
    }
}

fn add_tones(out: &mut [f64], sr: f64, tones: &[(f64, f64, f64)]) {
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        *v += tones
            .iter()
            .map(|&(f, a, p)| a * (TAU * f * t + p).sin())
            .sum::<f64>();
    }
}

fn high_band_tones(rng: &mut ChaCha8Rng) -> Vec<(f64, f64, f64)> {
    (0..6)
        .map(|_| {
            (
                rng.random_range(HIGH_BAND.0..HIGH_BAND.1),
                rng.random_range(0.002..0.006),
                rng.random_range(0.0..TAU),
            )
        })
        .collect()
}

fn render_clip(spec: &SynthSpec, seed: u64, label: Label, index: usize) -> (Vec<f64>, String) {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(&[seed, label.index() as u64, index as u64]));
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_secs * sr).round() as usize;
    let voice = Voice::draw(&mut rng);
    let noise_sigma = rng.random_range(0.003..0.008);

    let (mut signal, tag) = match (label, spec.artifacts) {
        (Label::Real, _) => (voice.render(n, sr, &[]), "human".to_string()),
        (Label::Fake, ArtifactMode::HighBand) => {
            let n_jumps = rng.random_range(3..=8);
            let mut jumps: Vec<(usize, f64)> = (0..n_jumps)
                .map(|_| {
                    (
                        rng.random_range(0..n),
                        rng.random_range(0.5 * std::f64::consts::PI..std::f64::consts::PI),
                    )
                })
                .collect();
            jumps.sort_by_key(|j| j.0);
            let mut s = voice.render(n, sr, &jumps);
            add_tones(&mut s, sr, &high_band_tones(&mut rng));
            (s, "vocoder".to_string())
        }
        (Label::Fake, ArtifactMode::SplitBand) => {
            let mut s = voice.render(n, sr, &[]);
            if rng.random_bool(0.5) {
                let tones: Vec<_> = (0..3)
                    .map(|k| {
                        (
                            voice.f0 * (k as f64 + 0.5),
                            rng.random_range(0.02..0.04),
                            rng.random_range(0.0..TAU),
                        )
                    })
                    .collect();
                add_tones(&mut s, sr, &tones);
                (s, "lowband".to_string())
            } else {
                add_tones(&mut s, sr, &high_band_tones(&mut rng));
                (s, "highband".to_string())
            }
        }
    };
    let noise = Normal::new(0.0, noise_sigma).expect("positive sigma");
    for v in signal.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    (signal, tag)
}

/// Generates `n_per_class` clips per class and assigns splits by a seeded
/// shuffle within each class.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthClip>> {
    spec.validate()?;
    let counts = spec.split_counts();
    let mut clips = Vec::with_capacity(2 * spec.n_per_class);
    for label in [Label::Real, Label::Fake] {
        let mut order: Vec<usize> = (0..spec.n_per_class).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            seed,
            0x5917,
            label.index() as u64,
        ])));
        let mut split_of = vec![Split::Eval; spec.n_per_class];
        for (rank, &i) in order.iter().enumerate() {
            split_of[i] = if rank < counts[0] {
                Split::Train
            } else if rank < counts[0] + counts[1] {
                Split::Test
            } else {
                Split::Eval
            };
        }
        for (index, &split) in split_of.iter().enumerate() {
            let (signal, source_tag) = render_clip(spec, seed, label, index);
            let samples = signal.iter().map(|&v| v as f32).collect();
            clips.push(SynthClip {
                clip: AudioClip::new(samples, spec.sample_rate)?,
                label,
                split,
                source_tag,
                index,
            });
        }
    }
    Ok(clips)
}

/// Writes the corpus as PCM-16 WAVs under `out_dir/wav` and a manifest at
/// `out_dir/manifest.csv`. Returns the manifest.
pub fn write_corpus(spec: &SynthSpec, seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let clips = generate(spec, seed)?;
    let mut entries = Vec::with_capacity(clips.len());
    for c in &clips {
        let name = c.file_name();
        write_wav(wav_dir.join(&name), &c.clip)?;
        entries.push(ManifestEntry {
            path: format!("wav/{name}"),
            label: c.label,
            split: c.split,
            source_tag: c.source_tag.clone(),
        });
    }
    let manifest = Manifest::new(entries, out_dir);
    manifest.save(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
