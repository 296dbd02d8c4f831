//! Pitch-synchronous resynthesis of the harmony voices.
//!
//! Each voice is rendered from the input recording by TD-PSOLA: Hann grains
//! two analysis periods wide are cut around pitch marks of the input and
//! laid down at pitch marks spaced by the target period. A cepstral
//! correction then pulls the spectral envelope of the result back towards
//! the envelope of the input, so formants stay put when the pitch moves.
//!
//! Output is silent wherever the target curve is unvoiced, except that
//! unvoiced input (consonants) next to a sung target is copied through at
//! half amplitude.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError};
use crate::exec::{self, Execution};
use crate::f0_transform::{self, ShiftError};
use crate::harmony::Arrangement;
use crate::note::Voice;
use crate::pitch::{frame_count, hop_samples, F0Curve};

const ENVELOPE_WINDOW: usize = 2048;
const ENVELOPE_HOP: usize = 512;
/// Lifter cutoff as a fraction of the shorter of the two periods.
const LIFTER_FRACTION: f64 = 0.6;
const MAX_ENVELOPE_DB: f64 = 12.0;
const CONSONANT_GAIN: f64 = 0.5;
const CONSONANT_REACH_SECONDS: f64 = 0.050;
/// Half-width of the smoothing applied to the gating masks.
const MASK_RAMP_SECONDS: f64 = 0.0025;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{which} curve has {got} frames, audio needs {expected}")]
    GridMismatch { which: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub envelope_correction: bool,
    pub consonant_passthrough: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { envelope_correction: true, consonant_passthrough: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceRender {
    pub voice: Voice,
    pub audio: AudioBuffer,
    pub target: F0Curve,
}

/// Renders `input` so that it follows `f0_out`.
pub fn synthesize_voice(
    voice: Voice,
    input: &AudioBuffer,
    f0_in: &F0Curve,
    f0_out: &F0Curve,
    cfg: &SynthConfig,
) -> Result<VoiceRender, SynthError> {
    let hop = hop_samples(input.sample_rate());
    let expected = frame_count(input.len(), hop);
    for (which, c) in [("input", f0_in), ("target", f0_out)] {
        if c.len() != expected {
            return Err(SynthError::GridMismatch { which, expected, got: c.len() });
        }
    }
    let x: Vec<f64> = input.samples().iter().map(|&s| s as f64).collect();
    let sr = input.sample_rate() as f64;

    let mut y = psola(&x, sr, hop, f0_in, f0_out);
    if cfg.envelope_correction {
        y = correct_envelope(&x, &y, sr, hop, f0_in, f0_out);
    }

    let ramp = (MASK_RAMP_SECONDS * sr).round() as usize;
    let target_voiced: Vec<bool> = f0_out.frames().iter().map(|f| f.is_voiced()).collect();
    let gate = smooth_mask(&frame_mask(&target_voiced, x.len(), hop), ramp);
    for (v, g) in y.iter_mut().zip(&gate) {
        *v *= g;
    }

    if cfg.consonant_passthrough {
        let reach = (CONSONANT_REACH_SECONDS / crate::pitch::HOP_SECONDS).round() as usize;
        let near = near_voiced(&target_voiced, reach);
        let pass: Vec<bool> =
            (0..target_voiced.len()).map(|k| near[k] && !target_voiced[k] && !f0_in.frames()[k].is_voiced()).collect();
        let pass = smooth_mask(&frame_mask(&pass, x.len(), hop), ramp);
        for ((v, &s), p) in y.iter_mut().zip(&x).zip(&pass) {
            *v += CONSONANT_GAIN * p * s;
        }
    }

    Ok(VoiceRender { voice, audio: AudioBuffer::from_unnormalized(y, input.sample_rate())?, target: f0_out.clone() })
}

/// Maximal runs of voiced frames as `[start, end)` frame ranges.
fn voiced_runs(curve: &F0Curve) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, f) in curve.frames().iter().enumerate() {
        match (f.is_voiced(), start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, curve.len()));
    }
    runs
}

/// Pitch marks over every voiced run of `curve`: `(position, period)`.
///
/// Each run starts at the loudest sample of its first period and steps by
/// the local period from there on.
fn pitch_marks(x: &[f64], sr: f64, hop: usize, curve: &F0Curve) -> Vec<(f64, f64)> {
    let mut marks = Vec::new();
    for (k0, k1) in voiced_runs(curve) {
        let start = (k0 * hop).saturating_sub(hop / 2);
        let end = (k1 * hop).saturating_sub(hop / 2).min(x.len());
        if start >= end {
            continue;
        }
        let period_at = |pos: f64| {
            let k = ((pos / hop as f64).round() as usize).clamp(k0, k1 - 1);
            sr / curve.f0(k).expect("run frames are voiced")
        };
        let first_period = period_at(start as f64).ceil() as usize;
        let search_end = (start + first_period.max(1)).min(end);
        let first =
            (start..search_end).max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()).then(b.cmp(&a))).unwrap_or(start);
        let mut pos = first as f64;
        while pos < end as f64 {
            let p = period_at(pos);
            marks.push((pos, p));
            pos += p;
        }
    }
    marks
}

fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos()).collect()
}

fn psola(x: &[f64], sr: f64, hop: usize, f0_in: &F0Curve, f0_out: &F0Curve) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    let analysis = pitch_marks(x, sr, hop, f0_in);
    if analysis.is_empty() {
        return y;
    }
    let synthesis = pitch_marks(x, sr, hop, f0_out);
    let n = x.len() as isize;
    let mut windows: Vec<Option<Vec<f64>>> = Vec::new();
    let mut nearest = 0usize;
    for (s, ps) in synthesis {
        while nearest + 1 < analysis.len() && (analysis[nearest + 1].0 - s).abs() <= (analysis[nearest].0 - s).abs() {
            nearest += 1;
        }
        let (a, pa) = analysis[nearest];
        if (a - s).abs() > pa.max(ps) {
            // no voiced input near this mark
            continue;
        }
        let half = pa.round().max(1.0) as usize;
        if windows.len() <= half {
            windows.resize(half + 1, None);
        }
        let w = windows[half].get_or_insert_with(|| hann(2 * half));
        let gain = (ps / pa).min(1.0);
        let a0 = a.round() as isize - half as isize;
        let s0 = s.round() as isize - half as isize;
        for (i, &wi) in w.iter().enumerate() {
            let (src, dst) = (a0 + i as isize, s0 + i as isize);
            if (0..n).contains(&src) && (0..n).contains(&dst) {
                y[dst as usize] += gain * wi * x[src as usize];
            }
        }
    }
    y
}

struct Stft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Stft {
    fn new() -> Self {
        let mut planner = FftPlanner::new();
        Stft {
            forward: planner.plan_fft_forward(ENVELOPE_WINDOW),
            inverse: planner.plan_fft_inverse(ENVELOPE_WINDOW),
            window: hann(ENVELOPE_WINDOW),
        }
    }

    fn spectrum(&self, signal: &[f64], start: isize) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = (0..ENVELOPE_WINDOW)
            .map(|i| {
                let idx = start + i as isize;
                let v = if idx >= 0 && (idx as usize) < signal.len() { signal[idx as usize] } else { 0.0 };
                Complex::new(v * self.window[i], 0.0)
            })
            .collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Log-magnitude envelope keeping quefrencies below `cutoff`.
    fn envelope(&self, spec: &[Complex<f64>], cutoff: usize) -> Vec<f64> {
        let n = ENVELOPE_WINDOW;
        let mut ceps: Vec<Complex<f64>> = spec.iter().map(|c| Complex::new(c.norm().max(1e-9).ln(), 0.0)).collect();
        self.inverse.process(&mut ceps);
        for (q, c) in ceps.iter_mut().enumerate() {
            let keep = q < cutoff || q > n - cutoff;
            *c = if keep { *c / n as f64 } else { Complex::default() };
        }
        self.forward.process(&mut ceps);
        ceps.iter().map(|c| c.re).collect()
    }
}

/// Reweights `y` so its spectral envelope tracks the envelope of `x` on
/// frames where both curves are voiced. Elsewhere `y` passes through.
fn correct_envelope(x: &[f64], y: &[f64], sr: f64, hop: usize, f0_in: &F0Curve, f0_out: &F0Curve) -> Vec<f64> {
    let stft = Stft::new();
    let n = ENVELOPE_WINDOW;
    let limit = (MAX_ENVELOPE_DB / 20.0) * std::f64::consts::LN_10;
    let mut out = vec![0.0; y.len()];
    let mut norm = vec![0.0; y.len()];
    let frames = y.len().div_ceil(ENVELOPE_HOP) + 1;
    for j in 0..frames {
        let start = (j * ENVELOPE_HOP) as isize - (n / 2) as isize;
        let mut spec_y = stft.spectrum(y, start);
        if spec_y.iter().all(|c| c.norm_sqr() == 0.0) {
            continue;
        }
        let k = ((j * ENVELOPE_HOP) as f64 / hop as f64).round() as usize;
        if let (Some(fi), Some(fo)) = (f0_in.f0(k), f0_out.f0(k)) {
            let cutoff = (LIFTER_FRACTION * (sr / fi).min(sr / fo)).floor() as usize;
            if cutoff >= 2 {
                let env_x = stft.envelope(&stft.spectrum(x, start), cutoff);
                let env_y = stft.envelope(&spec_y, cutoff);
                for ((c, ex), ey) in spec_y.iter_mut().zip(&env_x).zip(&env_y) {
                    *c *= (ex - ey).clamp(-limit, limit).exp();
                }
            }
        }
        stft.inverse.process(&mut spec_y);
        for (i, c) in spec_y.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < y.len() {
                let w = stft.window[i];
                out[idx as usize] += w * c.re / n as f64;
                norm[idx as usize] += w * w;
            }
        }
    }
    for ((o, &w), &orig) in out.iter_mut().zip(&norm).zip(y) {
        *o = if w > 1e-6 { *o / w } else { orig };
    }
    out
}

/// Per-sample 0/1 mask from per-frame flags; frame k covers the samples
/// nearest to its centre `k * hop`.
fn frame_mask(flags: &[bool], len: usize, hop: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let k = ((i + hop / 2) / hop).min(flags.len().saturating_sub(1));
            if flags.get(k).copied().unwrap_or(false) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Moving average over `2 * radius + 1` samples.
fn smooth_mask(mask: &[f64], radius: usize) -> Vec<f64> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut prefix = vec![0.0; mask.len() + 1];
    for (i, &m) in mask.iter().enumerate() {
        prefix[i + 1] = prefix[i] + m;
    }
    let width = (2 * radius + 1) as f64;
    (0..mask.len())
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(mask.len());
            let v = (prefix[hi] - prefix[lo]) / width;
            // exact zeros keep silent regions digitally silent
            if v < 1e-12 {
                0.0
            } else {
                v
            }
        })
        .collect()
}

/// Frames within `reach` frames of a voiced frame.
fn near_voiced(voiced: &[bool], reach: usize) -> Vec<bool> {
    let mut out = vec![false; voiced.len()];
    for (k, _) in voiced.iter().enumerate().filter(|(_, &v)| v) {
        let lo = k.saturating_sub(reach);
        let hi = (k + reach + 1).min(voiced.len());
        out[lo..hi].iter_mut().for_each(|o| *o = true);
    }
    out
}

/// Renders a list of voices against their target curves.
pub fn render_voices(
    input: &AudioBuffer,
    f0_in: &F0Curve,
    targets: &[(Voice, F0Curve)],
    cfg: &SynthConfig,
    exec: Execution,
) -> Result<Vec<VoiceRender>, SynthError> {
    exec::map_slice(exec, targets, |(v, t)| synthesize_voice(*v, input, f0_in, t, cfg)).into_iter().collect()
}

/// Stems in S, A, T, B order plus their unity-gain mix.
#[derive(Debug, Clone)]
pub struct Rendering {
    pub stems: [AudioBuffer; 4],
    pub mixdown: AudioBuffer,
    pub voices: Vec<VoiceRender>,
    /// Frames per harmony voice dropped by the shift band limit.
    pub out_of_range: [usize; 3],
}

/// Stem 0 is the input itself; stems 1-3 follow the arrangement.
pub fn assemble(
    input: &AudioBuffer,
    voices: Vec<VoiceRender>,
    out_of_range: [usize; 3],
) -> Result<Rendering, SynthError> {
    let stem = |v: Voice| {
        voices
            .iter()
            .find(|r| r.voice == v)
            .map(|r| r.audio.clone())
            .unwrap_or_else(|| AudioBuffer::silence(input.len(), input.sample_rate()))
    };
    let stems = [input.clone(), stem(Voice::Alto), stem(Voice::Tenor), stem(Voice::Bass)];
    let mixdown = audio::mix(&stems, &[1.0; 4])?;
    Ok(Rendering { stems, mixdown, voices, out_of_range })
}

pub fn render_arrangement(
    input: &AudioBuffer,
    arr: &Arrangement,
    f0_in: &F0Curve,
    cfg: &SynthConfig,
    exec: Execution,
) -> Result<Rendering, SynthError> {
    let shifted = f0_transform::voice_targets(arr, f0_in, exec)?;
    let mut out_of_range = [0; 3];
    for (slot, (_, s)) in out_of_range.iter_mut().zip(&shifted) {
        *slot = s.out_of_range;
    }
    let targets: Vec<(Voice, F0Curve)> = shifted.into_iter().map(|(v, s)| (v, s.curve)).collect();
    let voices = render_voices(input, f0_in, &targets, cfg, exec)?;
    assemble(input, voices, out_of_range)
}
