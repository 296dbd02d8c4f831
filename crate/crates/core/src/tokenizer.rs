//! Interleaved control/event token streams.
//!
//! Every note becomes a (time, duration, note) triplet. Melody notes are
//! *controls* and harmony notes are *events*. A control at time `s` is
//! placed immediately before the first event whose onset is at or after
//! `s - delta`, so the decoder sees each melody note `delta` seconds before
//! it has to harmonize it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::note::{NoteEvent, Ticks, Voice};

/// Default anticipation interval in seconds.
pub const DEFAULT_DELTA: f64 = 5.0;
/// Time tokens must stay below this many ticks.
pub const MAX_TIME_TICKS: u32 = 1 << 20;
/// Longest encodable duration, in ticks (10 s).
pub const MAX_DURATION_TICKS: u32 = 1000;
/// Size of the NOTE vocabulary: 4 voices x 128 pitches.
pub const NOTE_VOCAB: u32 = 4 * 128;
/// Version tag of the JSON dump format.
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    Time,
    Dur,
    Note,
    ControlTime,
    ControlDur,
    ControlNote,
    Sep,
}

impl TokenKind {
    /// Stable integer code used in dumps and on the bridge wire.
    pub fn code(self) -> u32 {
        match self {
            TokenKind::Time => 0,
            TokenKind::Dur => 1,
            TokenKind::Note => 2,
            TokenKind::ControlTime => 3,
            TokenKind::ControlDur => 4,
            TokenKind::ControlNote => 5,
            TokenKind::Sep => 6,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => TokenKind::Time,
            1 => TokenKind::Dur,
            2 => TokenKind::Note,
            3 => TokenKind::ControlTime,
            4 => TokenKind::ControlDur,
            5 => TokenKind::ControlNote,
            6 => TokenKind::Sep,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub value: u32,
}

impl Token {
    pub fn new(kind: TokenKind, value: u32) -> Self {
        Token { kind, value }
    }

    pub fn pair(self) -> [u32; 2] {
        [self.kind.code(), self.value]
    }
}

/// NOTE token value for a voice and pitch.
pub fn note_value(voice: Voice, pitch: u8) -> u32 {
    voice as u32 * 128 + pitch as u32
}

/// Inverse of [`note_value`].
pub fn split_note_value(value: u32) -> Option<(Voice, u8)> {
    if value >= NOTE_VOCAB {
        return None;
    }
    Some((Voice::from_index((value / 128) as usize)?, (value % 128) as u8))
}

#[derive(Debug, Error, PartialEq)]
pub enum TokenError {
    #[error("onset {0} is beyond the time vocabulary")]
    TimeOutOfRange(Ticks),
    #[error("duration {0} is outside 1..={MAX_DURATION_TICKS} ticks")]
    DurationOutOfRange(Ticks),
    #[error("pitch {0} is outside 0..=127")]
    PitchOutOfRange(u8),
    #[error("melody note in voice {0}; controls must be soprano")]
    ControlVoice(Voice),
    #[error("harmony note in voice {0}; events must be alto, tenor or bass")]
    EventVoice(Voice),
    #[error("malformed triplet at token {0}")]
    MalformedTriplet(usize),
    #[error("invalid token value {value} for {kind:?} at token {index}")]
    InvalidValue { index: usize, kind: TokenKind, value: u32 },
    #[error("anticipation interval must be positive and finite")]
    InvalidDelta,
    #[error("unsupported dump version {0}")]
    Version(u32),
}

/// A token stream plus the anticipation interval it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub delta: f64,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_json(&self) -> String {
        let dump = TokenDump {
            version: DUMP_VERSION,
            delta: self.delta,
            tokens: self.tokens.iter().map(|t| t.pair()).collect(),
        };
        serde_json::to_string(&dump).expect("token dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TokenError> {
        let dump: TokenDump = serde_json::from_str(text).map_err(|_| TokenError::MalformedTriplet(0))?;
        if dump.version != DUMP_VERSION {
            return Err(TokenError::Version(dump.version));
        }
        let tokens = dump
            .tokens
            .iter()
            .enumerate()
            .map(|(i, [k, v])| {
                TokenKind::from_code(*k).map(|kind| Token::new(kind, *v)).ok_or(TokenError::MalformedTriplet(i))
            })
            .collect::<Result<_, _>>()?;
        Ok(TokenSequence { tokens, delta: dump.delta })
    }
}

#[derive(Serialize, Deserialize)]
struct TokenDump {
    version: u32,
    delta: f64,
    tokens: Vec<[u32; 2]>,
}

/// Anticipation interval in whole ticks.
pub fn delta_ticks(delta: f64) -> Result<i64, TokenError> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(TokenError::InvalidDelta);
    }
    Ok(Ticks::from_seconds(delta).0 as i64)
}

fn check_note(n: &NoteEvent) -> Result<(), TokenError> {
    if n.onset.0 >= MAX_TIME_TICKS {
        return Err(TokenError::TimeOutOfRange(n.onset));
    }
    if n.duration.0 == 0 || n.duration.0 > MAX_DURATION_TICKS {
        return Err(TokenError::DurationOutOfRange(n.duration));
    }
    if n.pitch > 127 {
        return Err(TokenError::PitchOutOfRange(n.pitch));
    }
    Ok(())
}

/// Sort key giving the canonical event order: onset, then voice.
pub fn event_order(n: &NoteEvent) -> (Ticks, Voice, u8, Ticks) {
    (n.onset, n.voice, n.pitch, n.duration)
}

/// Sorts harmony notes into the order `encode` emits them.
pub fn canonical_sort(notes: &[NoteEvent]) -> Vec<NoteEvent> {
    let mut v = notes.to_vec();
    v.sort_by_key(event_order);
    v
}

pub fn control_triplet(n: &NoteEvent) -> [Token; 3] {
    [
        Token::new(TokenKind::ControlTime, n.onset.0),
        Token::new(TokenKind::ControlDur, n.duration.0),
        Token::new(TokenKind::ControlNote, note_value(Voice::Soprano, n.pitch)),
    ]
}

pub fn event_triplet(n: &NoteEvent) -> [Token; 3] {
    [
        Token::new(TokenKind::Time, n.onset.0),
        Token::new(TokenKind::Dur, n.duration.0),
        Token::new(TokenKind::Note, note_value(n.voice, n.pitch)),
    ]
}

/// Tick before which control `c` has to be surfaced.
pub fn anticipation_anchor(control: &NoteEvent, delta_ticks: i64) -> i64 {
    control.onset.0 as i64 - delta_ticks
}

/// Interleaves melody controls with harmony events.
pub fn encode(melody: &[NoteEvent], harmony: &[NoteEvent], delta: f64) -> Result<TokenSequence, TokenError> {
    let dt = delta_ticks(delta)?;
    for n in melody {
        if n.voice != Voice::Soprano {
            return Err(TokenError::ControlVoice(n.voice));
        }
        check_note(n)?;
    }
    for n in harmony {
        if n.voice == Voice::Soprano {
            return Err(TokenError::EventVoice(n.voice));
        }
        check_note(n)?;
    }
    let mut controls = melody.to_vec();
    controls.sort_by_key(|n| (n.onset, n.pitch, n.duration));
    let events = canonical_sort(harmony);

    let mut tokens = Vec::with_capacity(3 * (controls.len() + events.len()));
    let mut next_event = events.iter().peekable();
    for c in &controls {
        let anchor = anticipation_anchor(c, dt);
        while let Some(e) = next_event.next_if(|e| (e.onset.0 as i64) < anchor) {
            tokens.extend(event_triplet(e));
        }
        tokens.extend(control_triplet(c));
    }
    for e in next_event {
        tokens.extend(event_triplet(e));
    }
    Ok(TokenSequence { tokens, delta })
}

/// Splits a stream back into (melody, harmony). SEP tokens between
/// triplets are skipped.
pub fn decode(ts: &TokenSequence) -> Result<(Vec<NoteEvent>, Vec<NoteEvent>), TokenError> {
    let mut melody = Vec::new();
    let mut harmony = Vec::new();
    let toks = &ts.tokens;
    let mut i = 0;
    while i < toks.len() {
        if toks[i].kind == TokenKind::Sep {
            i += 1;
            continue;
        }
        if i + 3 > toks.len() {
            return Err(TokenError::MalformedTriplet(i));
        }
        let (t, d, n) = (toks[i], toks[i + 1], toks[i + 2]);
        let control = match (t.kind, d.kind, n.kind) {
            (TokenKind::Time, TokenKind::Dur, TokenKind::Note) => false,
            (TokenKind::ControlTime, TokenKind::ControlDur, TokenKind::ControlNote) => true,
            _ => return Err(TokenError::MalformedTriplet(i)),
        };
        if t.value >= MAX_TIME_TICKS {
            return Err(TokenError::InvalidValue { index: i, kind: t.kind, value: t.value });
        }
        if d.value == 0 || d.value > MAX_DURATION_TICKS {
            return Err(TokenError::InvalidValue { index: i + 1, kind: d.kind, value: d.value });
        }
        let (voice, pitch) =
            split_note_value(n.value).ok_or(TokenError::InvalidValue { index: i + 2, kind: n.kind, value: n.value })?;
        let note = NoteEvent::new(Ticks(t.value), Ticks(d.value), pitch, voice);
        if control {
            if voice != Voice::Soprano {
                return Err(TokenError::ControlVoice(voice));
            }
            melody.push(note);
        } else {
            if voice == Voice::Soprano {
                return Err(TokenError::EventVoice(voice));
            }
            harmony.push(note);
        }
        i += 3;
    }
    Ok((melody, harmony))
}
