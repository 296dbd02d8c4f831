#![allow(dead_code)]
pub mod oracle;

use std::f64::consts::PI;
use std::path::Path;

use harmonizer::audio::{save_audio, AudioBuffer, BitDepth, INTERNAL_RATE};
use harmonizer::note::{NoteEvent, Ticks, Voice};
use rand::Rng;

pub const SR: f64 = INTERNAL_RATE as f64;
pub const C_MAJOR: [u8; 8] = [60, 62, 64, 65, 67, 69, 71, 72];

pub fn midi_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Phase-continuous tone following `freq(t)`, with a few harmonics.
pub fn tone(seconds: f64, amplitude: f64, harmonics: &[f64], freq: impl Fn(f64) -> f64) -> AudioBuffer {
    let n = (seconds * SR).round() as usize;
    let mut phase = 0.0f64;
    let norm: f64 = harmonics.iter().sum();
    let samples = (0..n)
        .map(|i| {
            phase += 2.0 * PI * freq(i as f64 / SR) / SR;
            let v: f64 = harmonics.iter().enumerate().map(|(h, a)| a * ((h + 1) as f64 * phase).sin()).sum();
            (amplitude * v / norm) as f32
        })
        .collect();
    AudioBuffer::new(samples, INTERNAL_RATE).unwrap()
}

/// Pure-sine C-major scale, 0.4 s per note.
pub fn sine_scale() -> AudioBuffer {
    tone(3.2, 0.5, &[1.0], |t| midi_hz(C_MAJOR[((t / 0.4) as usize).min(7)] as f64))
}

/// A4 with +-20 cent vibrato at 5.5 Hz.
pub fn vibrato() -> AudioBuffer {
    tone(2.0, 0.5, &[1.0], |t| 440.0 * 2f64.powf(20.0 / 1200.0 * (2.0 * PI * 5.5 * t).sin()))
}

/// Ten seconds of a voice-like tune: scale up and down with short breaths.
pub fn ten_second_tune() -> AudioBuffer {
    let tune = [60, 62, 64, 65, 67, 69, 71, 72, 71, 69, 67, 65, 64, 62, 60, 64, 67, 72, 67, 64];
    let step = 0.5;
    let n = (10.0 * SR) as usize;
    let mut phase = 0.0f64;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SR;
            let idx = ((t / step) as usize).min(tune.len() - 1);
            let within = t - idx as f64 * step;
            let gate = if within > step - 0.04 { 0.0 } else { (within / 0.01).min(1.0) };
            phase += 2.0 * PI * midi_hz(tune[idx] as f64) / SR;
            let v = 0.6 * phase.sin() + 0.25 * (2.0 * phase).sin() + 0.15 * (3.0 * phase).sin();
            (0.5 * gate * v) as f32
        })
        .collect();
    AudioBuffer::new(samples, INTERNAL_RATE).unwrap()
}

pub fn write_wav(buf: &AudioBuffer, path: &Path) {
    save_audio(buf, path, BitDepth::Float32).unwrap();
}

/// Random monophonic melody of `n` notes in `lo..=hi`.
pub fn random_melody(rng: &mut impl Rng, n: usize, lo: u8, hi: u8) -> Vec<NoteEvent> {
    let mut t = rng.gen_range(0..200u32);
    (0..n)
        .map(|_| {
            let dur = rng.gen_range(10..=120u32);
            let note = NoteEvent::new(Ticks(t), Ticks(dur), rng.gen_range(lo..=hi), Voice::Soprano);
            t += dur + rng.gen_range(0..40u32);
            note
        })
        .collect()
}
