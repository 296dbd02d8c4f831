//! Count-based voice model trained on four-part MIDI chorales.
//!
//! For every soprano onset the model records, per lower voice, the offset
//! in semitones from the soprano to that voice, conditioned on the soprano
//! pitch class, the voice and the voice's offset at the previous soprano
//! onset. Scores are add-one smoothed log probabilities over the fixed
//! offset vocabulary `MIN_OFFSET..=MAX_OFFSET`.
//!
//! # File format
//!
//! A single JSON object, written with sorted keys so that training is
//! byte-for-byte reproducible:
//!
//! ```text
//! {"format":"harmonizer-markov","version":1,"min_offset":-127,"max_offset":0,
//!  "contexts":[{"melody_pc":0,"voice":1,"prev_offset":null,"counts":[[-5,3],[-3,1]]}, ...]}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HarmonyError, NoteScorer, ScoringContext};
use crate::midi::{self, MidiNote};
use crate::note::Voice;

pub const FORMAT_TAG: &str = "harmonizer-markov";
pub const FORMAT_VERSION: u32 = 1;
pub const MIN_OFFSET: i32 = -127;
pub const MAX_OFFSET: i32 = 0;
pub const VOCAB_SIZE: usize = (MAX_OFFSET - MIN_OFFSET + 1) as usize;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("no valid four-voice MIDI files in {0}")]
    EmptyCorpus(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub melody_pc: u8,
    pub voice: u8,
    /// `None` at the start of a phrase.
    pub prev_offset: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkovModel {
    counts: BTreeMap<Context, BTreeMap<i32, u32>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    min_offset: i32,
    max_offset: i32,
    contexts: Vec<ContextEntry>,
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    melody_pc: u8,
    voice: u8,
    prev_offset: Option<i32>,
    counts: Vec<(i32, u32)>,
}

impl MarkovModel {
    pub fn observe(&mut self, ctx: Context, offset: i32) {
        *self.counts.entry(ctx).or_default().entry(offset).or_default() += 1;
    }

    pub fn count(&self, ctx: &Context, offset: i32) -> u32 {
        self.counts.get(ctx).and_then(|m| m.get(&offset)).copied().unwrap_or(0)
    }

    pub fn context_total(&self, ctx: &Context) -> u32 {
        self.counts.get(ctx).map(|m| m.values().sum()).unwrap_or(0)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.counts.keys()
    }

    /// Add-one smoothed probability of `offset`; zero outside the vocabulary.
    pub fn probability(&self, ctx: &Context, offset: i32) -> f64 {
        if !(MIN_OFFSET..=MAX_OFFSET).contains(&offset) {
            return 0.0;
        }
        (self.count(ctx, offset) as f64 + 1.0) / (self.context_total(ctx) as f64 + VOCAB_SIZE as f64)
    }

    pub fn log_probability(&self, ctx: &Context, offset: i32) -> f64 {
        let total = self.context_total(ctx) as f64 + VOCAB_SIZE as f64;
        // offsets outside the vocabulary get the unseen-outcome score
        let c = if (MIN_OFFSET..=MAX_OFFSET).contains(&offset) { self.count(ctx, offset) } else { 0 };
        ((c as f64 + 1.0) / total).ln()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            min_offset: MIN_OFFSET,
            max_offset: MAX_OFFSET,
            contexts: self
                .counts
                .iter()
                .map(|(c, m)| ContextEntry {
                    melody_pc: c.melody_pc,
                    voice: c.voice,
                    prev_offset: c.prev_offset,
                    counts: m.iter().map(|(&o, &n)| (o, n)).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MarkovError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| MarkovError::Corrupt(e.to_string()))?;
        if file.format != FORMAT_TAG || file.version != FORMAT_VERSION {
            return Err(MarkovError::Corrupt(format!("unexpected header {} v{}", file.format, file.version)));
        }
        if file.min_offset != MIN_OFFSET || file.max_offset != MAX_OFFSET {
            return Err(MarkovError::Corrupt("offset vocabulary mismatch".into()));
        }
        let mut model = MarkovModel::default();
        for e in file.contexts {
            if e.melody_pc >= 12 || !(1..=3).contains(&e.voice) {
                return Err(MarkovError::Corrupt(format!("bad context {}/{}", e.melody_pc, e.voice)));
            }
            let ctx = Context { melody_pc: e.melody_pc, voice: e.voice, prev_offset: e.prev_offset };
            for (o, n) in e.counts {
                if !(MIN_OFFSET..=MAX_OFFSET).contains(&o) {
                    return Err(MarkovError::Corrupt(format!("offset {o} outside vocabulary")));
                }
                *model.counts.entry(ctx).or_default().entry(o).or_default() += n;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MarkovError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|e| MarkovError::Io { path: path.display().to_string(), reason: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MarkovError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MarkovError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_json(&text)
    }

    /// Adds the transitions of one chorale, voices ordered S, A, T, B.
    pub fn observe_chorale(&mut self, voices: [&[MidiNote]; 4]) {
        let sounding = |notes: &[MidiNote], tick: u64| {
            notes.iter().find(|n| n.start_tick <= tick && tick < n.end_tick).map(|n| n.pitch)
        };
        for v in 1..4 {
            let mut prev: Option<i32> = None;
            for s in voices[0] {
                let Some(p) = sounding(voices[v], s.start_tick) else {
                    prev = None;
                    continue;
                };
                let offset = p as i32 - s.pitch as i32;
                if !(MIN_OFFSET..=MAX_OFFSET).contains(&offset) {
                    prev = None;
                    continue;
                }
                self.observe(Context { melody_pc: s.pitch % 12, voice: v as u8, prev_offset: prev }, offset);
                prev = Some(offset);
            }
        }
    }
}

/// Trains on every `.mid`/`.midi` file in `corpus_dir`, in file-name order.
/// Files that do not yield four voices are skipped.
pub fn train_markov(corpus_dir: impl AsRef<Path>) -> Result<MarkovModel, MarkovError> {
    let dir = corpus_dir.as_ref();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| MarkovError::Io { path: dir.display().to_string(), reason: e.to_string() })?;
    let mut files: Vec<_> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        })
        .collect();
    files.sort();

    let mut model = MarkovModel::default();
    let mut used = 0;
    for f in &files {
        let Ok(tracks) = midi::read_smf(f) else { continue };
        let Ok(voices) = midi::assign_voices(&tracks) else { continue };
        model.observe_chorale(voices.map(|t| t.notes.as_slice()));
        used += 1;
    }
    if used == 0 {
        return Err(MarkovError::EmptyCorpus(dir.display().to_string()));
    }
    Ok(model)
}

/// Scores candidates with a trained [`MarkovModel`].
#[derive(Debug, Clone)]
pub struct MarkovScorer {
    model: MarkovModel,
}

impl MarkovScorer {
    pub fn new(model: MarkovModel) -> Self {
        MarkovScorer { model }
    }

    pub fn model(&self) -> &MarkovModel {
        &self.model
    }

    pub fn context_for(ctx: &ScoringContext<'_>) -> Context {
        let prev_offset = ctx.history.last().map(|c| c[ctx.voice.index()] as i32 - c[Voice::Soprano.index()] as i32);
        Context { melody_pc: ctx.melody_pitch() % 12, voice: ctx.voice as u8, prev_offset }
    }
}

impl NoteScorer for MarkovScorer {
    fn name(&self) -> &str {
        "markov"
    }

    fn score(&mut self, ctx: &ScoringContext<'_>, candidates: &[u8]) -> Result<Vec<f64>, HarmonyError> {
        let key = Self::context_for(ctx);
        let melody = ctx.melody_pitch() as i32;
        Ok(candidates.iter().map(|&p| self.model.log_probability(&key, p as i32 - melody)).collect())
    }
}
