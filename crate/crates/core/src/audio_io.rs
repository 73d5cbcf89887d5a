//! WAV decoding and encoding, linear resampling, and one-second segmentation.
//!
//! Decoding accepts RIFF/WAVE with PCM-16 or IEEE float-32 payloads in one or
//! two channels. Stereo is downmixed by channel mean. The writer emits PCM-16
//! mono only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting a zero sample rate and non-finite samples.
    /// Out-of-range amplitudes are clamped into `[-1, 1]`.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("sample {i} is not finite")));
        }
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::decode(
            "fmt ",
            format!("chunk is {} bytes, need at least 16", body.len()),
        ));
    }
    let mut format = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits = read_u16(body, 14);
    if format == WAVE_FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(Error::decode(
                "fmt ",
                "extensible format missing sub-format",
            ));
        }
        // First two bytes of the sub-format GUID carry the actual codec.
        format = read_u16(body, 24);
    }
    if channels == 0 {
        return Err(Error::decode("fmt ", "zero channels"));
    }
    if sample_rate == 0 {
        return Err(Error::decode("fmt ", "zero sample rate"));
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        block_align,
        bits,
    })
}

/// Decodes an in-memory RIFF/WAVE byte stream.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(Error::decode("RIFF", "file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::decode("RIFF", "missing RIFF signature"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::decode("RIFF", "form type is not WAVE"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::decode(
                    &name,
                    format!(
                        "declared size {size} exceeds remaining {} bytes",
                        bytes.len() - body_start
                    ),
                )
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::decode("fmt ", "chunk not found before data"))?;
    let data = data.ok_or_else(|| Error::decode("data", "chunk not found"))?;

    let bytes_per_sample = match (fmt.format, fmt.bits) {
        (WAVE_FORMAT_PCM, 16) => 2,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => 4,
        (f, b) => {
            return Err(Error::UnsupportedFormat(format!(
                "format tag {f:#06x} with {b} bits per sample (need PCM-16 or float-32)"
            )))
        }
    };
    if fmt.channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels (need mono or stereo)",
            fmt.channels
        )));
    }
    let channels = fmt.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    if fmt.block_align as usize != frame_bytes {
        return Err(Error::decode(
            "fmt ",
            format!(
                "block align {} inconsistent with {} channels of {} bytes",
                fmt.block_align, channels, bytes_per_sample
            ),
        ));
    }
    if data.len() % frame_bytes != 0 {
        return Err(Error::decode(
            "data",
            format!(
                "payload of {} bytes is not a whole number of {frame_bytes}-byte frames",
                data.len()
            ),
        ));
    }

    let decode_one = |chunk: &[u8]| -> f32 {
        if bytes_per_sample == 2 {
            i16::from_le_bytes([chunk[0], chunk[1]]) as f32 / 32768.0
        } else {
            f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]])
        }
    };

    let mut samples = Vec::with_capacity(data.len() / frame_bytes);
    for frame in data.chunks_exact(frame_bytes) {
        let v = if channels == 1 {
            decode_one(frame)
        } else {
            let l = decode_one(&frame[..bytes_per_sample]);
            let r = decode_one(&frame[bytes_per_sample..]);
            (l + r) / 2.0
        };
        if !v.is_finite() {
            return Err(Error::decode("data", "non-finite float sample"));
        }
        samples.push(v);
    }
    AudioClip::new(samples, fmt.sample_rate)
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| e.at(path))
}

/// Encodes a clip as a 16-bit PCM mono WAV. Amplitudes are scaled by 32768,
/// rounded, and saturated to the i16 range.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(clip)).map_err(|e| Error::io(path, e))
}

/// Linear-interpolation resampler. Output length is
/// `round(len * target_sr / source_sr)`; equal rates return the clip unchanged.
pub fn resample(clip: &AudioClip, target_sr: u32) -> Result<AudioClip> {
    if target_sr == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    if target_sr == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let out_len = (src.len() as f64 * target_sr as f64 / clip.sample_rate as f64).round() as usize;
    let step = clip.sample_rate as f64 / target_sr as f64;
    let last = src.len().saturating_sub(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let i0 = (pos.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = (pos - i0 as f64).clamp(0.0, 1.0);
            let a = src[i0] as f64;
            let b = src[i1] as f64;
            (a + frac * (b - a)) as f32
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_sr,
    })
}

/// Splits a clip into consecutive non-overlapping one-second clips. A trailing
/// remainder shorter than one second is dropped.
pub fn segment_one_second(clip: &AudioClip) -> Vec<AudioClip> {
    let sr = clip.sample_rate as usize;
    clip.samples
        .chunks_exact(sr)
        .map(|c| AudioClip {
            samples: c.to_vec(),
            sample_rate: clip.sample_rate,
        })
        .collect()
}
