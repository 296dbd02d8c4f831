//! Note events on the shared 10 ms tick grid.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Length of one tick in seconds. Equal to the f0 hop so that note
/// boundaries and f0 frames share a single time base.
pub const TICK_SECONDS: f64 = 0.010;

/// A time position or length counted in 10 ms ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Ticks(pub u32);

impl Ticks {
    /// Rounds a time in seconds to the nearest tick. Negative and non-finite
    /// inputs saturate to zero.
    pub fn from_seconds(seconds: f64) -> Self {
        if !seconds.is_finite() || seconds <= 0.0 {
            return Ticks(0);
        }
        let t = (seconds / TICK_SECONDS).round();
        Ticks(if t >= u32::MAX as f64 { u32::MAX } else { t as u32 })
    }

    pub fn seconds(self) -> f64 {
        self.0 as f64 * TICK_SECONDS
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}t", self.0)
    }
}

/// The four choral voices. The discriminant doubles as the MIDI
/// program/instrument number of the voice's track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Voice {
    Soprano = 0,
    Alto = 1,
    Tenor = 2,
    Bass = 3,
}

impl Voice {
    pub const ALL: [Voice; 4] = [Voice::Soprano, Voice::Alto, Voice::Tenor, Voice::Bass];
    pub const HARMONY: [Voice; 3] = [Voice::Alto, Voice::Tenor, Voice::Bass];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Voice> {
        Voice::ALL.get(index).copied()
    }

    /// The voice directly above this one, if any.
    pub fn upper(self) -> Option<Voice> {
        match self {
            Voice::Soprano => None,
            v => Voice::from_index(v.index() - 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Voice::Soprano => "soprano",
            Voice::Alto => "alto",
            Voice::Tenor => "tenor",
            Voice::Bass => "bass",
        }
    }
}

impl fmt::Display for Voice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One note: onset, duration and MIDI pitch, tagged with its voice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: Ticks,
    pub duration: Ticks,
    pub pitch: u8,
    pub voice: Voice,
}

impl NoteEvent {
    /// Panics if `duration` is zero or `pitch` is above 127.
    pub fn new(onset: Ticks, duration: Ticks, pitch: u8, voice: Voice) -> Self {
        assert!(duration.0 > 0, "note duration must be positive");
        assert!(pitch <= 127, "MIDI pitch out of range: {pitch}");
        NoteEvent { onset, duration, pitch, voice }
    }

    pub fn from_seconds(onset: f64, duration: f64, pitch: u8, voice: Voice) -> Self {
        NoteEvent::new(Ticks::from_seconds(onset), Ticks::from_seconds(duration), pitch, voice)
    }

    /// First tick after the note.
    pub fn end(&self) -> Ticks {
        Ticks(self.onset.0 + self.duration.0)
    }

    pub fn onset_seconds(&self) -> f64 {
        self.onset.seconds()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.duration.seconds()
    }

    pub fn with_voice(self, voice: Voice) -> Self {
        NoteEvent { voice, ..self }
    }

    pub fn with_pitch(self, pitch: u8) -> Self {
        NoteEvent { pitch, ..self }
    }
}

/// True if `notes` is sorted by onset and no note overlaps its successor.
pub fn is_monophonic(notes: &[NoteEvent]) -> bool {
    notes.windows(2).all(|w| w[0].onset < w[1].onset && w[0].end() <= w[1].onset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_rounding_is_within_half_a_tick() {
        for ms in 0..2000u32 {
            let s = ms as f64 * 0.001 + 0.0004;
            let t = Ticks::from_seconds(s);
            assert!((t.seconds() - s).abs() <= 0.005 + 1e-12, "{s} -> {t}");
        }
    }

    #[test]
    fn negative_time_saturates() {
        assert_eq!(Ticks::from_seconds(-1.0), Ticks(0));
        assert_eq!(Ticks::from_seconds(f64::NAN), Ticks(0));
    }

    #[test]
    fn voice_order() {
        assert_eq!(Voice::Bass.upper(), Some(Voice::Tenor));
        assert_eq!(Voice::Alto.upper(), Some(Voice::Soprano));
        assert_eq!(Voice::Soprano.upper(), None);
        assert_eq!(Voice::from_index(4), None);
    }

    #[test]
    fn monophonic_check() {
        let a = NoteEvent::new(Ticks(0), Ticks(10), 60, Voice::Soprano);
        let b = NoteEvent::new(Ticks(10), Ticks(10), 62, Voice::Soprano);
        let c = NoteEvent::new(Ticks(5), Ticks(10), 62, Voice::Soprano);
        assert!(is_monophonic(&[a, b]));
        assert!(!is_monophonic(&[a, c]));
        assert!(!is_monophonic(&[b, a]));
    }
}
