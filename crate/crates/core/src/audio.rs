//! WAV input/output, downmixing, resampling and mixing.
//!
//! Everything downstream works on mono `f32` buffers at [`INTERNAL_RATE`].

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::exec::{self, Execution};

/// Internal pipeline sample rate.
pub const INTERNAL_RATE: u32 = 44_100;

/// Peak level that [`mix`] normalizes to when the raw sum clips.
pub const MIX_CEILING: f32 = 0.99;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unreadable audio file {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("zero-length audio")]
    ZeroLength,
    #[error("cannot write {path}: {reason}")]
    Unwritable { path: String, reason: String },
    #[error("mismatched sample rates: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("{buffers} buffers but {gains} gains")]
    GainCountMismatch { buffers: usize, gains: usize },
    #[error("nothing to mix")]
    NothingToMix,
    #[error("invalid buffer: {0}")]
    Invalid(String),
}

/// Mono audio. Samples are finite and within [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::Invalid("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::Invalid(format!(
                "sample {i} = {} is not finite or exceeds full scale",
                samples[i]
            )));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    /// Builds a buffer from arbitrary finite samples, scaling the whole
    /// buffer down to [`MIX_CEILING`] if its peak exceeds 1.0.
    pub fn from_unnormalized(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::Invalid("non-finite sample".into()));
        }
        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let gain = if peak > 1.0 { MIX_CEILING as f64 / peak } else { 1.0 };
        let out = samples.iter().map(|s| (s * gain) as f32).collect::<Vec<_>>();
        AudioBuffer::new(out.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(), sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        AudioBuffer { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
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

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

/// Output sample format for [`save_audio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

/// Reads a WAV file and converts it to mono at [`INTERNAL_RATE`].
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let unreadable = |reason: String| AudioError::Unreadable { path: path.display().to_string(), reason };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("unsupported WAV variant".into()),
        other => unreadable(other.to_string()),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(unreadable("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| unreadable(e.to_string()))?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| unreadable(e.to_string()))?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")));
        }
    };
    let frames = interleaved.len() / channels;
    if frames == 0 {
        return Err(AudioError::ZeroLength);
    }
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(channels).map(|c| c.iter().sum::<f64>() / channels as f64).collect()
    };
    let mono = if spec.sample_rate == INTERNAL_RATE {
        mono
    } else {
        resample(&mono, spec.sample_rate, INTERNAL_RATE, Execution::Parallel)
    };
    AudioBuffer::from_unnormalized(mono, INTERNAL_RATE)
}

/// Writes a mono WAV file.
pub fn save_audio(buffer: &AudioBuffer, path: impl AsRef<Path>, depth: BitDepth) -> Result<(), AudioError> {
    let path = path.as_ref();
    if buffer.is_empty() {
        return Err(AudioError::ZeroLength);
    }
    let unwritable =
        |e: hound::Error| AudioError::Unwritable { path: path.display().to_string(), reason: e.to_string() };
    let spec = match depth {
        BitDepth::Pcm16 => hound::WavSpec {
            channels: 1,
            sample_rate: buffer.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        },
        BitDepth::Float32 => hound::WavSpec {
            channels: 1,
            sample_rate: buffer.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(unwritable)?;
    match depth {
        BitDepth::Pcm16 => {
            for &s in &buffer.samples {
                writer.write_sample(quantize_pcm16(s)).map_err(unwritable)?;
            }
        }
        BitDepth::Float32 => {
            for &s in &buffer.samples {
                writer.write_sample(s).map_err(unwritable)?;
            }
        }
    }
    writer.finalize().map_err(unwritable)
}

fn quantize_pcm16(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Weighted sum of buffers, zero-padded to the longest. The result is
/// peak-normalized to [`MIX_CEILING`] only when the raw sum exceeds 1.0.
pub fn mix(buffers: &[AudioBuffer], gains: &[f32]) -> Result<AudioBuffer, AudioError> {
    if buffers.len() != gains.len() {
        return Err(AudioError::GainCountMismatch { buffers: buffers.len(), gains: gains.len() });
    }
    let first = buffers.first().ok_or(AudioError::NothingToMix)?;
    let rate = first.sample_rate;
    if let Some(b) = buffers.iter().find(|b| b.sample_rate != rate) {
        return Err(AudioError::SampleRateMismatch(rate, b.sample_rate));
    }
    let len = buffers.iter().map(AudioBuffer::len).max().unwrap_or(0);
    let mut acc = vec![0.0f64; len];
    for (b, &g) in buffers.iter().zip(gains) {
        for (a, &s) in acc.iter_mut().zip(&b.samples) {
            *a += g as f64 * s as f64;
        }
    }
    AudioBuffer::from_unnormalized(acc, rate)
}

const SINC_ZERO_CROSSINGS: f64 = 32.0;
const SINC_ROLLOFF: f64 = 0.95;

/// Band-limited resampling with a Blackman-windowed sinc kernel.
///
/// Output length is `round(len * to / from)`. Each output sample is
/// computed independently, so the loop is split across threads.
pub fn resample(input: &[f64], from: u32, to: u32, exec: Execution) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    // cutoff in cycles per input sample
    let cutoff = 0.5 * ratio.min(1.0) * SINC_ROLLOFF;
    let half_width = SINC_ZERO_CROSSINGS / (2.0 * cutoff);
    let step = from as f64 / to as f64;
    exec::map_indexed(exec, out_len, |j| {
        let pos = j as f64 * step;
        let lo = ((pos - half_width).ceil().max(0.0)) as usize;
        let hi = ((pos + half_width).floor() as usize).min(input.len() - 1);
        let mut acc = 0.0;
        for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
            let t = pos - k as f64;
            acc += x * sinc_kernel(t, cutoff, half_width);
        }
        acc
    })
}

fn sinc_kernel(t: f64, cutoff: f64, half_width: f64) -> f64 {
    if t.abs() >= half_width {
        return 0.0;
    }
    let arg = 2.0 * cutoff * t;
    let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
    // Blackman over [-half_width, half_width]
    let u = (t / half_width + 1.0) * 0.5;
    let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
    2.0 * cutoff * sinc * w
}
