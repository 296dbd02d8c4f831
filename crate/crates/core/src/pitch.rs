//! Monophonic f0 tracking (YIN) and note segmentation.

use std::io::{self, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::exec::{self, Execution};
use crate::note::{NoteEvent, Ticks, Voice, TICK_SECONDS};

/// Frame hop of every f0 curve, in seconds.
pub const HOP_SECONDS: f64 = TICK_SECONDS;
/// Lowest and highest frequency a voiced tracker frame may carry.
pub const MIN_F0: f64 = 40.0;
pub const MAX_F0: f64 = 1500.0;

#[derive(Debug, Error, PartialEq)]
pub enum PitchError {
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
}

/// One analysis frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Frame {
    /// `None` for unvoiced frames.
    pub f0: Option<f64>,
    /// Periodicity in [0, 1]; 1 means perfectly periodic.
    pub periodicity: f64,
}

impl F0Frame {
    pub const UNVOICED: F0Frame = F0Frame { f0: None, periodicity: 0.0 };

    pub fn voiced(f0: f64, periodicity: f64) -> Self {
        F0Frame { f0: Some(f0), periodicity }
    }

    pub fn is_voiced(&self) -> bool {
        self.f0.is_some()
    }
}

/// f0 contour on a uniform 10 ms grid. Frame `k` describes time `k * hop`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct F0Curve {
    frames: Vec<F0Frame>,
}

impl F0Curve {
    pub fn new(frames: Vec<F0Frame>) -> Self {
        F0Curve { frames }
    }

    pub fn hop_seconds(&self) -> f64 {
        HOP_SECONDS
    }

    pub fn frames(&self) -> &[F0Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn f0(&self, frame: usize) -> Option<f64> {
        self.frames.get(frame).and_then(|f| f.f0)
    }

    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.is_voiced()).count()
    }

    /// Writes `time,f0,periodicity` rows; unvoiced frames have f0 = 0.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,f0,periodicity")?;
        for (k, f) in self.frames.iter().enumerate() {
            writeln!(out, "{:.2},{:.6},{:.6}", k as f64 * HOP_SECONDS, f.f0.unwrap_or(0.0), f.periodicity)?;
        }
        Ok(())
    }
}

/// Number of frames covering `samples` at the given hop.
pub fn frame_count(samples: usize, hop: usize) -> usize {
    samples.div_ceil(hop)
}

/// Hop in samples for a sample rate (441 at 44.1 kHz).
pub fn hop_samples(sample_rate: u32) -> usize {
    (sample_rate as f64 * HOP_SECONDS).round() as usize
}

pub fn hz_to_midi(freq: f64) -> Result<f64, PitchError> {
    if freq <= 0.0 || !freq.is_finite() {
        return Err(PitchError::NonPositiveFrequency(freq));
    }
    Ok(69.0 + 12.0 * (freq / 440.0).log2())
}

/// YIN and voicing parameters.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub window: usize,
    /// Absolute threshold on the cumulative mean normalized difference.
    pub threshold: f64,
    pub min_periodicity: f64,
    pub min_rms_dbfs: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { window: 2048, threshold: 0.1, min_periodicity: 0.5, min_rms_dbfs: -50.0 }
    }
}

/// Tracks f0 with the default configuration, in parallel over frames.
pub fn extract_f0(audio: &AudioBuffer) -> F0Curve {
    extract_f0_with(audio, &TrackerConfig::default(), Execution::Parallel)
}

pub fn extract_f0_with(audio: &AudioBuffer, cfg: &TrackerConfig, exec: Execution) -> F0Curve {
    let yin = Yin::new(audio.sample_rate(), cfg);
    let hop = hop_samples(audio.sample_rate());
    let samples = audio.samples();
    let frames = exec::map_indexed_with(
        exec,
        frame_count(samples.len(), hop),
        || yin.scratch(),
        |scratch, k| yin.analyse(samples, k * hop, scratch),
    );
    F0Curve::new(frames)
}

struct Yin {
    sample_rate: f64,
    window: usize,
    lag_min: usize,
    lag_max: usize,
    /// integration length of the difference function
    span: usize,
    threshold: f64,
    min_periodicity: f64,
    min_rms: f64,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct YinScratch {
    frame: Vec<f64>,
    spec_x: Vec<Complex<f64>>,
    spec_a: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
    energy: Vec<f64>,
    cmnd: Vec<f64>,
}

impl Yin {
    fn new(sample_rate: u32, cfg: &TrackerConfig) -> Self {
        let sr = sample_rate as f64;
        let lag_min = (sr / MAX_F0).floor().max(2.0) as usize;
        let lag_max = ((sr / MIN_F0).ceil() as usize).min(cfg.window * 3 / 4);
        let span = cfg.window - lag_max;
        let fft_len = (cfg.window + span).next_power_of_two();
        let mut planner = FftPlanner::new();
        Yin {
            sample_rate: sr,
            window: cfg.window,
            lag_min,
            lag_max,
            span,
            threshold: cfg.threshold,
            min_periodicity: cfg.min_periodicity,
            min_rms: 10f64.powf(cfg.min_rms_dbfs / 20.0),
            fft_len,
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    fn scratch(&self) -> YinScratch {
        let scratch_len = self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        YinScratch {
            frame: vec![0.0; self.window],
            spec_x: vec![Complex::default(); self.fft_len],
            spec_a: vec![Complex::default(); self.fft_len],
            fft: vec![Complex::default(); scratch_len],
            energy: vec![0.0; self.window + 1],
            cmnd: vec![1.0; self.lag_max + 2],
        }
    }

    /// Analyses the frame centred on sample `center`.
    fn analyse(&self, samples: &[f32], center: usize, s: &mut YinScratch) -> F0Frame {
        let hop = (self.sample_rate * HOP_SECONDS).round() as usize;
        let lo = center.saturating_sub(hop);
        let hi = (center + hop).min(samples.len());
        if hi <= lo {
            return F0Frame::UNVOICED;
        }
        let rms = (samples[lo..hi].iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / (hi - lo) as f64).sqrt();
        if rms < self.min_rms {
            return F0Frame::UNVOICED;
        }

        // The integration region is centred on the frame; lagged copies extend to the right.
        let start = center as isize - (self.span / 2) as isize;
        for (j, v) in s.frame.iter_mut().enumerate() {
            let idx = start + j as isize;
            *v = if idx >= 0 && (idx as usize) < samples.len() { samples[idx as usize] as f64 } else { 0.0 };
        }

        // cross term r(lag) = sum_{j < span} x[j] x[j + lag] via FFT
        for (i, c) in s.spec_x.iter_mut().enumerate() {
            *c = Complex::new(if i < self.window { s.frame[i] } else { 0.0 }, 0.0);
        }
        for (i, c) in s.spec_a.iter_mut().enumerate() {
            *c = Complex::new(if i < self.span { s.frame[i] } else { 0.0 }, 0.0);
        }
        self.forward.process_with_scratch(&mut s.spec_x, &mut s.fft);
        self.forward.process_with_scratch(&mut s.spec_a, &mut s.fft);
        for (x, a) in s.spec_x.iter_mut().zip(&s.spec_a) {
            *x *= a.conj();
        }
        self.inverse.process_with_scratch(&mut s.spec_x, &mut s.fft);
        let norm = 1.0 / self.fft_len as f64;

        s.energy[0] = 0.0;
        for j in 0..self.window {
            s.energy[j + 1] = s.energy[j] + s.frame[j] * s.frame[j];
        }
        let base = s.energy[self.span];

        // cumulative mean normalized difference
        s.cmnd[0] = 1.0;
        let mut running = 0.0;
        for lag in 1..=self.lag_max {
            let shifted = s.energy[lag + self.span] - s.energy[lag];
            let d = (base + shifted - 2.0 * s.spec_x[lag].re * norm).max(0.0);
            running += d;
            s.cmnd[lag] = if running > 0.0 { d * lag as f64 / running } else { 1.0 };
        }

        let cmnd = &s.cmnd[..=self.lag_max];
        let mut best = None;
        let mut lag = self.lag_min;
        while lag <= self.lag_max {
            if cmnd[lag] < self.threshold {
                while lag < self.lag_max && cmnd[lag + 1] < cmnd[lag] {
                    lag += 1;
                }
                best = Some(lag);
                break;
            }
            lag += 1;
        }
        let lag = best.unwrap_or_else(|| {
            (self.lag_min..=self.lag_max).min_by(|&a, &b| cmnd[a].total_cmp(&cmnd[b])).unwrap_or(self.lag_min)
        });
        let periodicity = (1.0 - cmnd[lag]).clamp(0.0, 1.0);

        let refined = if lag > 1 && lag < self.lag_max {
            let (a, b, c) = (cmnd[lag - 1], cmnd[lag], cmnd[lag + 1]);
            let denom = a - 2.0 * b + c;
            if denom.abs() > 1e-12 {
                lag as f64 + (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                lag as f64
            }
        } else {
            lag as f64
        };
        let f0 = self.sample_rate / refined;
        if periodicity >= self.min_periodicity && (MIN_F0..=MAX_F0).contains(&f0) {
            F0Frame::voiced(f0, periodicity)
        } else {
            F0Frame { f0: None, periodicity }
        }
    }
}

/// Note segmentation parameters, in frames.
#[derive(Debug, Clone)]
pub struct SegmenterConfig {
    /// A pitch change must persist this long before a new note opens.
    pub min_change_frames: usize,
    /// An unvoiced gap this long ends the current note.
    pub max_gap_frames: usize,
    /// Shorter notes are dropped.
    pub min_note_frames: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig { min_change_frames: 5, max_gap_frames: 8, min_note_frames: 6 }
    }
}

/// Segments an f0 curve into Soprano note events.
pub fn transcribe(f0: &F0Curve) -> Vec<NoteEvent> {
    transcribe_with(f0, &SegmenterConfig::default())
}

pub fn transcribe_with(f0: &F0Curve, cfg: &SegmenterConfig) -> Vec<NoteEvent> {
    let quantized: Vec<Option<i32>> =
        f0.frames().iter().map(|f| f.f0.and_then(|hz| hz_to_midi(hz).ok()).map(|m| m.round() as i32)).collect();

    // spans are [start, end) frame ranges
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, i32)> = None;
    let mut pending: Option<(usize, i32)> = None;
    let mut last_voiced = 0usize;
    let mut gap = 0usize;

    for (k, q) in quantized.iter().enumerate() {
        match *q {
            None => {
                gap += 1;
                if gap >= cfg.max_gap_frames {
                    if let Some((start, _)) = current.take() {
                        spans.push((start, last_voiced + 1));
                    }
                    pending = None;
                }
            }
            Some(q) => {
                gap = 0;
                match current {
                    None => current = Some((k, q)),
                    Some((start, label)) => {
                        if q == label {
                            pending = None;
                        } else {
                            let p = match pending {
                                Some((ps, pq)) if pq == q => (ps, pq),
                                _ => (k, q),
                            };
                            pending = Some(p);
                            if k + 1 - p.0 >= cfg.min_change_frames {
                                spans.push((start, p.0));
                                current = Some(p);
                                pending = None;
                            }
                        }
                    }
                }
                last_voiced = k;
            }
        }
    }
    if let Some((start, _)) = current {
        spans.push((start, last_voiced + 1));
    }

    spans
        .into_iter()
        .filter(|&(s, e)| e - s >= cfg.min_note_frames)
        .filter_map(|(s, e)| {
            let mut pitches: Vec<i32> = quantized[s..e].iter().flatten().copied().collect();
            if pitches.is_empty() {
                return None;
            }
            pitches.sort_unstable();
            let median = pitches[(pitches.len() - 1) / 2].clamp(0, 127) as u8;
            Some(NoteEvent::new(Ticks(s as u32), Ticks((e - s) as u32), median, Voice::Soprano))
        })
        .collect()
}
