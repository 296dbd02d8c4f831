//! Standard MIDI File export and import.
//!
//! Arrangements are written as SMF format 1 at 480 PPQ and 120 BPM with one
//! track per voice; the track's program and channel equal the voice index.

use std::path::Path;

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, Track, TrackEvent, TrackEventKind};
use thiserror::Error;

use crate::harmony::{Arrangement, VoiceRanges};
use crate::note::{NoteEvent, Ticks, Voice};

pub const PPQ: u16 = 480;
/// Microseconds per quarter note at 120 BPM.
pub const TEMPO_USPQ: u32 = 500_000;
const VELOCITY: u8 = 80;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("cannot write {path}: {reason}")]
    Unwritable { path: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("{0}")]
    Voices(String),
}

/// 10 ms ticks to MIDI ticks at [`PPQ`] and 120 BPM (9.6 MIDI ticks each).
fn to_midi_ticks(t: Ticks) -> u64 {
    let per_second = PPQ as u64 * 1_000_000 / TEMPO_USPQ as u64;
    // t * per_second / 100, rounded half up
    (t.0 as u64 * per_second * 2 + 100) / 200
}

fn voice_track(voice: Voice, notes: &[NoteEvent], with_tempo: bool) -> Track<'static> {
    let ch = u4::new(voice as u8);
    let mut timed: Vec<(u64, u8, TrackEventKind<'static>)> = Vec::new();
    for n in notes {
        let key = u7::new(n.pitch);
        timed.push((
            to_midi_ticks(n.onset),
            1,
            TrackEventKind::Midi { channel: ch, message: MidiMessage::NoteOn { key, vel: u7::new(VELOCITY) } },
        ));
        timed.push((
            to_midi_ticks(n.end()),
            0,
            TrackEventKind::Midi { channel: ch, message: MidiMessage::NoteOff { key, vel: u7::new(0) } },
        ));
    }
    // offs before ons at the same instant
    timed.sort_by_key(|&(t, order, _)| (t, order));

    let name: &'static [u8] = match voice {
        Voice::Soprano => b"Soprano",
        Voice::Alto => b"Alto",
        Voice::Tenor => b"Tenor",
        Voice::Bass => b"Bass",
    };
    let mut track = vec![TrackEvent { delta: u28::new(0), kind: TrackEventKind::Meta(MetaMessage::TrackName(name)) }];
    if with_tempo {
        track.push(TrackEvent {
            delta: u28::new(0),
            kind: TrackEventKind::Meta(MetaMessage::Tempo(u24::new(TEMPO_USPQ))),
        });
    }
    track.push(TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Midi {
            channel: ch,
            message: MidiMessage::ProgramChange { program: u7::new(voice as u8) },
        },
    });
    let mut now = 0u64;
    for (t, _, kind) in timed {
        track.push(TrackEvent { delta: u28::new((t - now) as u32), kind });
        now = t;
    }
    track.push(TrackEvent { delta: u28::new(0), kind: TrackEventKind::Meta(MetaMessage::EndOfTrack) });
    track
}

/// Serializes an arrangement to SMF bytes.
pub fn arrangement_to_smf(arr: &Arrangement) -> Vec<u8> {
    let tracks = Voice::ALL.iter().map(|&v| voice_track(v, arr.voice(v), v == Voice::Soprano)).collect();
    let smf = Smf { header: Header::new(Format::Parallel, Timing::Metrical(u15::new(PPQ))), tracks };
    let mut out = Vec::new();
    smf.write_std(&mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn export_midi(arr: &Arrangement, path: impl AsRef<Path>) -> Result<(), MidiError> {
    let path = path.as_ref();
    std::fs::write(path, arrangement_to_smf(arr))
        .map_err(|e| MidiError::Unwritable { path: path.display().to_string(), reason: e.to_string() })
}

/// A note read from a file, with times in MIDI ticks and seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidiNote {
    pub start_tick: u64,
    pub end_tick: u64,
    pub start: f64,
    pub end: f64,
    pub pitch: u8,
    pub channel: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MidiTrack {
    pub name: Option<String>,
    /// First program change in the track.
    pub program: Option<u8>,
    pub notes: Vec<MidiNote>,
}

struct TempoMap {
    /// (tick, seconds at tick, microseconds per quarter)
    points: Vec<(u64, f64, u32)>,
    timing: Timing,
}

impl TempoMap {
    fn new(timing: Timing, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|c| c.0);
        let mut points = vec![(0u64, 0.0f64, TEMPO_USPQ)];
        for (tick, uspq) in changes {
            let sec = Self::seconds_with(&points, timing, tick);
            if tick == points.last().unwrap().0 {
                points.last_mut().unwrap().2 = uspq;
            } else {
                points.push((tick, sec, uspq));
            }
        }
        TempoMap { points, timing }
    }

    fn seconds_with(points: &[(u64, f64, u32)], timing: Timing, tick: u64) -> f64 {
        match timing {
            Timing::Metrical(ppq) => {
                let &(t0, s0, uspq) = points.iter().rev().find(|p| p.0 <= tick).unwrap_or(&points[0]);
                s0 + (tick - t0) as f64 * uspq as f64 / 1e6 / ppq.as_int() as f64
            }
            Timing::Timecode(fps, sub) => tick as f64 / (fps.as_f32() as f64 * sub as f64),
        }
    }

    fn seconds(&self, tick: u64) -> f64 {
        Self::seconds_with(&self.points, self.timing, tick)
    }
}

/// Parses SMF bytes into per-track note lists.
pub fn parse_smf(bytes: &[u8]) -> Result<Vec<MidiTrack>, String> {
    let smf = Smf::parse(bytes).map_err(|e| e.to_string())?;
    let mut tempo_changes = Vec::new();
    for track in &smf.tracks {
        let mut now = 0u64;
        for ev in track {
            now += ev.delta.as_int() as u64;
            if let TrackEventKind::Meta(MetaMessage::Tempo(t)) = ev.kind {
                tempo_changes.push((now, t.as_int()));
            }
        }
    }
    let map = TempoMap::new(smf.header.timing, tempo_changes);

    let mut out = Vec::with_capacity(smf.tracks.len());
    for track in &smf.tracks {
        let mut t = MidiTrack::default();
        let mut open: Vec<(u8, u8, u64)> = Vec::new();
        let mut now = 0u64;
        for ev in track {
            now += ev.delta.as_int() as u64;
            match ev.kind {
                TrackEventKind::Meta(MetaMessage::TrackName(name)) if t.name.is_none() => {
                    t.name = Some(String::from_utf8_lossy(name).into_owned());
                }
                TrackEventKind::Midi { channel, message } => {
                    let ch = channel.as_int();
                    match message {
                        MidiMessage::ProgramChange { program } if t.program.is_none() => {
                            t.program = Some(program.as_int());
                        }
                        MidiMessage::NoteOn { key, vel } if vel.as_int() > 0 => {
                            open.push((ch, key.as_int(), now));
                        }
                        MidiMessage::NoteOn { key, .. } | MidiMessage::NoteOff { key, .. } => {
                            if let Some(i) = open.iter().position(|&(c, k, _)| c == ch && k == key.as_int()) {
                                let (_, pitch, start) = open.remove(i);
                                if now > start {
                                    t.notes.push(MidiNote {
                                        start_tick: start,
                                        end_tick: now,
                                        start: map.seconds(start),
                                        end: map.seconds(now),
                                        pitch,
                                        channel: ch,
                                    });
                                }
                            }
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        t.notes.sort_by_key(|n| (n.start_tick, n.pitch));
        out.push(t);
    }
    Ok(out)
}

pub fn read_smf(path: impl AsRef<Path>) -> Result<Vec<MidiTrack>, MidiError> {
    let path = path.as_ref();
    let unreadable = |reason: String| MidiError::Unreadable { path: path.display().to_string(), reason };
    let bytes = std::fs::read(path).map_err(|e| unreadable(e.to_string()))?;
    parse_smf(&bytes).map_err(unreadable)
}

/// Picks the SATB tracks: by program 0-3 when every program is present,
/// otherwise the first four tracks that carry notes.
pub fn assign_voices(tracks: &[MidiTrack]) -> Result<[&MidiTrack; 4], MidiError> {
    let by_program: Vec<Option<&MidiTrack>> =
        (0..4u8).map(|p| tracks.iter().find(|t| t.program == Some(p) && !t.notes.is_empty())).collect();
    if by_program.iter().all(Option::is_some) {
        return Ok([0, 1, 2, 3].map(|i| by_program[i].unwrap()));
    }
    let with_notes: Vec<&MidiTrack> = tracks.iter().filter(|t| !t.notes.is_empty()).collect();
    if with_notes.len() < 4 {
        return Err(MidiError::Voices(format!("expected 4 voice tracks, found {}", with_notes.len())));
    }
    Ok([with_notes[0], with_notes[1], with_notes[2], with_notes[3]])
}

/// Reads the four voices of an SMF file back as note events.
pub fn import_midi(path: impl AsRef<Path>) -> Result<Arrangement, MidiError> {
    let path = path.as_ref();
    let tracks = read_smf(path)?;
    let mut arr = Arrangement::empty();
    arr.ranges = VoiceRanges::default();
    // an exported empty arrangement has four tracks and no notes
    let voices: Vec<&MidiTrack> = match assign_voices(&tracks) {
        Ok(v) => v.to_vec(),
        Err(_) if tracks.iter().all(|t| t.notes.is_empty()) => return Ok(arr),
        Err(e) => return Err(e),
    };
    for (v, track) in Voice::ALL.iter().zip(voices) {
        let notes: Vec<NoteEvent> = track
            .notes
            .iter()
            .map(|n| {
                let on = Ticks::from_seconds(n.start);
                let off = Ticks::from_seconds(n.end);
                NoteEvent::new(on, Ticks(off.0.saturating_sub(on.0).max(1)), n.pitch, *v)
            })
            .collect();
        match v {
            Voice::Soprano => arr.soprano = notes,
            Voice::Alto => arr.alto = notes,
            Voice::Tenor => arr.tenor = notes,
            Voice::Bass => arr.bass = notes,
        }
    }
    Ok(arr)
}
