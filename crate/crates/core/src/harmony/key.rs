//! Key estimation by profile correlation.

use serde::{Deserialize, Serialize};

use crate::note::NoteEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Key {
    /// Pitch class of the tonic, 0 = C.
    pub tonic: u8,
    pub mode: Mode,
}

impl Key {
    pub const C_MAJOR: Key = Key { tonic: 0, mode: Mode::Major };
}

// Krumhansl-Kessler probe-tone ratings, tonic first.
const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

/// Duration-weighted pitch-class histogram.
pub fn pitch_class_histogram(melody: &[NoteEvent]) -> [f64; 12] {
    let mut h = [0.0; 12];
    for n in melody {
        h[(n.pitch % 12) as usize] += n.duration.0 as f64;
    }
    h
}

/// Pearson correlation between the histogram read from `tonic` and a profile.
fn correlation(hist: &[f64; 12], tonic: usize, profile: &[f64; 12]) -> f64 {
    let mh = hist.iter().sum::<f64>() / 12.0;
    let mp = profile.iter().sum::<f64>() / 12.0;
    let (mut num, mut sh, mut sp) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let a = hist[(i + tonic) % 12] - mh;
        let b = profile[i] - mp;
        num += a * b;
        sh += a * a;
        sp += b * b;
    }
    if sh == 0.0 || sp == 0.0 {
        0.0
    } else {
        num / (sh * sp).sqrt()
    }
}

/// Best-correlated of the 24 major/minor keys. Ties go to the lower tonic,
/// then major. A melody with no duration yields C major.
pub fn key_estimate(melody: &[NoteEvent]) -> Key {
    let hist = pitch_class_histogram(melody);
    let mut best = Key::C_MAJOR;
    let mut best_r = f64::NEG_INFINITY;
    for tonic in 0..12 {
        for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
            let r = correlation(&hist, tonic, profile);
            if r > best_r {
                best_r = r;
                best = Key { tonic: tonic as u8, mode };
            }
        }
    }
    best
}

/// Diatonic triads as (root offset from tonic, chord intervals), in the
/// order they are preferred when several contain the same pitch class.
fn triads(mode: Mode) -> &'static [(u8, [u8; 3])] {
    const MAJ: [u8; 3] = [0, 4, 7];
    const MIN: [u8; 3] = [0, 3, 7];
    const DIM: [u8; 3] = [0, 3, 6];
    match mode {
        // I V IV vi ii iii vii°
        Mode::Major => &[(0, MAJ), (7, MAJ), (5, MAJ), (9, MIN), (2, MIN), (4, MIN), (11, DIM)],
        // i V iv VI III VII ii°
        Mode::Minor => &[(0, MIN), (7, MAJ), (5, MIN), (8, MAJ), (3, MAJ), (10, MAJ), (2, DIM)],
    }
}

/// Pitch classes of the preferred diatonic triad containing `pc`. When no
/// diatonic triad contains it, the major triad rooted on `pc`.
pub fn best_triad(key: Key, pc: u8) -> [u8; 3] {
    let pc = pc % 12;
    for (root, shape) in triads(key.mode) {
        let chord = shape.map(|i| (key.tonic + root + i) % 12);
        if chord.contains(&pc) {
            return chord;
        }
    }
    [pc, (pc + 4) % 12, (pc + 7) % 12]
}
