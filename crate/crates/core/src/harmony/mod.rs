//! Four-part harmonization by constrained autoregressive decoding.
//!
//! The melody is fed to the decoder as control tokens. For every melody
//! note the decoder emits one Alto, one Tenor and one Bass event, in that
//! order. The time and duration tokens of each event are copied from the
//! melody note. Only the note token is chosen: the backend scores the
//! pitches that survive the range and no-crossing mask, every other entry
//! of the NOTE vocabulary is set to negative infinity, and the note is
//! sampled from the resulting softmax.

pub mod bridge;
pub mod key;
pub mod markov;
pub mod rulebook;
mod sampling;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::bridge::ExternalScorer;
pub use self::key::{best_triad, key_estimate, Key, Mode};
pub use self::markov::{train_markov, MarkovModel, MarkovScorer};
pub use self::rulebook::RulebookScorer;
pub use self::sampling::SamplerConfig;

use crate::note::{is_monophonic, NoteEvent, Voice};
use crate::tokenizer::{
    self, anticipation_anchor, control_triplet, delta_ticks, note_value, Token, TokenError, TokenKind, TokenSequence,
    NOTE_VOCAB,
};

#[derive(Debug, Error)]
pub enum HarmonyError {
    #[error("empty melody")]
    EmptyMelody,
    #[error("invalid melody: {0}")]
    InvalidMelody(String),
    #[error("backend {backend} returned {got} scores for {expected} candidates")]
    ScoreCount { backend: String, expected: usize, got: usize },
    #[error("backend {backend} returned a non-finite score at step {step} ({voice})")]
    NonFiniteScore { backend: String, step: usize, voice: Voice },
    #[error("no candidate pitches for {voice} at step {step}")]
    EmptyCandidates { step: usize, voice: Voice },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// Inclusive MIDI pitch range of one voice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitchRange {
    pub low: u8,
    pub high: u8,
}

impl PitchRange {
    pub const fn new(low: u8, high: u8) -> Self {
        PitchRange { low, high }
    }

    pub fn contains(&self, pitch: u8) -> bool {
        (self.low..=self.high).contains(&pitch)
    }

    pub fn center(&self) -> f64 {
        (self.low as f64 + self.high as f64) / 2.0
    }
}

/// Ranges of the three harmony voices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceRanges {
    pub alto: PitchRange,
    pub tenor: PitchRange,
    pub bass: PitchRange,
}

impl Default for VoiceRanges {
    /// Alto F3-D5, Tenor C3-G4, Bass E2-C4.
    fn default() -> Self {
        VoiceRanges { alto: PitchRange::new(53, 74), tenor: PitchRange::new(48, 67), bass: PitchRange::new(40, 60) }
    }
}

impl VoiceRanges {
    /// Range of a harmony voice. The soprano is unconstrained.
    pub fn get(&self, voice: Voice) -> PitchRange {
        match voice {
            Voice::Soprano => PitchRange::new(0, 127),
            Voice::Alto => self.alto,
            Voice::Tenor => self.tenor,
            Voice::Bass => self.bass,
        }
    }

    /// Shifts all three ranges down by whole octaves until the lowest
    /// melody note is at or above the alto floor, so the crossing mask
    /// can never leave a voice without candidates. Floors clamp at 0.
    pub fn fitted_to(&self, melody: &[NoteEvent]) -> VoiceRanges {
        let Some(lowest) = melody.iter().map(|n| n.pitch).min() else {
            return *self;
        };
        let mut octaves = 0i32;
        while (self.alto.low as i32 - 12 * octaves) > lowest as i32 {
            octaves += 1;
        }
        let shift = |r: PitchRange| {
            PitchRange::new((r.low as i32 - 12 * octaves).max(0) as u8, (r.high as i32 - 12 * octaves).max(0) as u8)
        };
        VoiceRanges { alto: shift(self.alto), tenor: shift(self.tenor), bass: shift(self.bass) }
    }

    /// Pitches a voice may take below `ceiling`, ascending.
    pub fn candidates(&self, voice: Voice, ceiling: u8) -> Vec<u8> {
        let r = self.get(voice);
        let top = r.high.min(ceiling);
        if top < r.low {
            Vec::new()
        } else {
            (r.low..=top).collect()
        }
    }
}

/// The melody and its three generated voices, index-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    pub soprano: Vec<NoteEvent>,
    pub alto: Vec<NoteEvent>,
    pub tenor: Vec<NoteEvent>,
    pub bass: Vec<NoteEvent>,
    /// Ranges the harmony voices were decoded in.
    pub ranges: VoiceRanges,
}

impl Arrangement {
    pub fn empty() -> Self {
        Arrangement {
            soprano: Vec::new(),
            alto: Vec::new(),
            tenor: Vec::new(),
            bass: Vec::new(),
            ranges: VoiceRanges::default(),
        }
    }

    pub fn voice(&self, voice: Voice) -> &[NoteEvent] {
        match voice {
            Voice::Soprano => &self.soprano,
            Voice::Alto => &self.alto,
            Voice::Tenor => &self.tenor,
            Voice::Bass => &self.bass,
        }
    }

    fn voice_mut(&mut self, voice: Voice) -> &mut Vec<NoteEvent> {
        match voice {
            Voice::Soprano => &mut self.soprano,
            Voice::Alto => &mut self.alto,
            Voice::Tenor => &mut self.tenor,
            Voice::Bass => &mut self.bass,
        }
    }

    pub fn len(&self) -> usize {
        self.soprano.len()
    }

    pub fn is_empty(&self) -> bool {
        self.soprano.is_empty()
    }

    /// All harmony events, in canonical token order.
    pub fn harmony_events(&self) -> Vec<NoteEvent> {
        let mut all: Vec<NoteEvent> = Voice::HARMONY.iter().flat_map(|&v| self.voice(v).iter().copied()).collect();
        all.sort_by_key(tokenizer::event_order);
        all
    }

    /// Checks quota, alignment, ranges and the no-crossing order.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.soprano.len();
        for v in Voice::HARMONY {
            let notes = self.voice(v);
            if notes.len() != n {
                return Err(format!("{v} has {} notes for {n} melody notes", notes.len()));
            }
            let range = self.ranges.get(v);
            for (i, (h, s)) in notes.iter().zip(&self.soprano).enumerate() {
                if h.voice != v {
                    return Err(format!("note {i} of {v} is tagged {}", h.voice));
                }
                if h.onset != s.onset || h.duration != s.duration {
                    return Err(format!("{v} note {i} is not aligned with the melody"));
                }
                if !range.contains(h.pitch) {
                    return Err(format!("{v} note {i} pitch {} outside {range:?}", h.pitch));
                }
            }
        }
        for i in 0..n {
            let p: Vec<u8> = Voice::ALL.iter().map(|&v| self.voice(v)[i].pitch).collect();
            if !(p[3] <= p[2] && p[2] <= p[1] && p[1] <= p[0]) {
                return Err(format!("voice crossing at step {i}: {p:?}"));
            }
        }
        Ok(())
    }
}

/// What a backend sees when scoring one note token.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub melody: &'a [NoteEvent],
    /// Index of the melody note being harmonized.
    pub step: usize,
    pub voice: Voice,
    /// Completed chords (S, A, T, B pitches) of earlier steps.
    pub history: &'a [[u8; 4]],
    /// Pitches already fixed at this step; the soprano is always set.
    pub current: [Option<u8>; 4],
    pub key: Key,
    pub ranges: &'a VoiceRanges,
    /// Token stream so far, ending with the forced time and duration tokens.
    pub tokens: &'a [Token],
}

impl ScoringContext<'_> {
    pub fn melody_pitch(&self) -> u8 {
        self.melody[self.step].pitch
    }

    /// Pitch of `voice` at the previous step.
    pub fn previous(&self, voice: Voice) -> Option<u8> {
        self.history.last().map(|c| c[voice.index()])
    }
}

/// A next-note scorer. Scores are unnormalized logits, one per candidate,
/// in candidate order.
pub trait NoteScorer {
    fn name(&self) -> &str;

    fn deterministic(&self) -> bool {
        true
    }

    fn score(&mut self, ctx: &ScoringContext<'_>, candidates: &[u8]) -> Result<Vec<f64>, HarmonyError>;
}

/// Scores every candidate equally.
#[derive(Debug, Clone, Default)]
pub struct UniformScorer;

impl NoteScorer for UniformScorer {
    fn name(&self) -> &str {
        "uniform"
    }

    fn score(&mut self, _: &ScoringContext<'_>, candidates: &[u8]) -> Result<Vec<f64>, HarmonyError> {
        Ok(vec![0.0; candidates.len()])
    }
}

/// One note-token decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub step: usize,
    pub voice: Voice,
    pub candidates: Vec<u8>,
    /// Sampling distribution over the whole NOTE vocabulary.
    pub probabilities: Vec<f64>,
    pub chosen: u8,
}

#[derive(Debug, Clone)]
pub struct Harmonization {
    pub arrangement: Arrangement,
    /// Full interleaved stream: melody controls and generated events.
    pub tokens: TokenSequence,
    pub key: Key,
    /// Populated by [`harmonize_traced`].
    pub trace: Vec<DecodeStep>,
}

/// Generates Alto, Tenor and Bass for `melody`.
pub fn harmonize(
    melody: &[NoteEvent],
    backend: &mut dyn NoteScorer,
    cfg: &SamplerConfig,
    delta: f64,
) -> Result<Harmonization, HarmonyError> {
    run(melody, backend, cfg, delta, false)
}

/// Like [`harmonize`], also recording the distribution of every step.
pub fn harmonize_traced(
    melody: &[NoteEvent],
    backend: &mut dyn NoteScorer,
    cfg: &SamplerConfig,
    delta: f64,
) -> Result<Harmonization, HarmonyError> {
    run(melody, backend, cfg, delta, true)
}

fn check_melody(melody: &[NoteEvent]) -> Result<(), HarmonyError> {
    if melody.is_empty() {
        return Err(HarmonyError::EmptyMelody);
    }
    if let Some(n) = melody.iter().find(|n| n.voice != Voice::Soprano) {
        return Err(HarmonyError::InvalidMelody(format!("note in voice {}", n.voice)));
    }
    if !is_monophonic(melody) {
        return Err(HarmonyError::InvalidMelody("notes must be sorted and non-overlapping".into()));
    }
    // surfaces tick and duration limits before decoding starts
    tokenizer::encode(melody, &[], tokenizer::DEFAULT_DELTA)?;
    Ok(())
}

fn run(
    melody: &[NoteEvent],
    backend: &mut dyn NoteScorer,
    cfg: &SamplerConfig,
    delta: f64,
    trace: bool,
) -> Result<Harmonization, HarmonyError> {
    cfg.validate()?;
    check_melody(melody)?;
    let dt = delta_ticks(delta)?;
    let key = key_estimate(melody);
    let ranges = cfg.ranges.fitted_to(melody);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut arrangement = Arrangement { ranges, ..Arrangement::empty() };
    arrangement.soprano = melody.to_vec();
    let mut history: Vec<[u8; 4]> = Vec::with_capacity(melody.len());
    let mut tokens: Vec<Token> = Vec::with_capacity(12 * melody.len());
    let mut steps = Vec::new();
    let mut next_control = 0;

    for (i, note) in melody.iter().enumerate() {
        let mut current = [Some(note.pitch), None, None, None];
        for voice in Voice::HARMONY {
            while next_control < melody.len() && anticipation_anchor(&melody[next_control], dt) <= note.onset.0 as i64 {
                tokens.extend(control_triplet(&melody[next_control]));
                next_control += 1;
            }
            // forced: the event inherits the control's time and duration
            tokens.push(Token::new(TokenKind::Time, note.onset.0));
            tokens.push(Token::new(TokenKind::Dur, note.duration.0));

            let ceiling = current[voice.index() - 1].expect("upper voice decided first");
            let candidates = ranges.candidates(voice, ceiling);
            if candidates.is_empty() {
                return Err(HarmonyError::EmptyCandidates { step: i, voice });
            }
            let ctx = ScoringContext {
                melody,
                step: i,
                voice,
                history: &history,
                current,
                key,
                ranges: &ranges,
                tokens: &tokens,
            };
            let scores = backend.score(&ctx, &candidates)?;
            if scores.len() != candidates.len() {
                return Err(HarmonyError::ScoreCount {
                    backend: backend.name().to_string(),
                    expected: candidates.len(),
                    got: scores.len(),
                });
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(HarmonyError::NonFiniteScore { backend: backend.name().to_string(), step: i, voice });
            }

            let mut logits = vec![f64::NEG_INFINITY; NOTE_VOCAB as usize];
            for (&p, &s) in candidates.iter().zip(&scores) {
                logits[note_value(voice, p) as usize] = s;
            }
            let (index, probabilities) = sampling::choose(&logits, cfg, &mut rng);
            let (_, pitch) = tokenizer::split_note_value(index as u32).expect("index within the NOTE vocabulary");
            debug_assert!(candidates.contains(&pitch));

            tokens.push(Token::new(TokenKind::Note, index as u32));
            current[voice.index()] = Some(pitch);
            arrangement.voice_mut(voice).push(note.with_voice(voice).with_pitch(pitch));
            if trace {
                steps.push(DecodeStep { step: i, voice, candidates, probabilities, chosen: pitch });
            }
        }
        history.push(current.map(|p| p.expect("all voices decided")));
    }
    for c in &melody[next_control..] {
        tokens.extend(control_triplet(c));
    }

    Ok(Harmonization { arrangement, tokens: TokenSequence { tokens, delta }, key, trace: steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note::Ticks;

    fn melody(pitches: &[u8]) -> Vec<NoteEvent> {
        pitches
            .iter()
            .enumerate()
            .map(|(i, &p)| NoteEvent::new(Ticks(i as u32 * 40), Ticks(40), p, Voice::Soprano))
            .collect()
    }

    #[test]
    fn candidate_sets() {
        let r = VoiceRanges::default();
        assert_eq!(r.candidates(Voice::Alto, 60), (53..=60).collect::<Vec<_>>());
        assert_eq!(r.candidates(Voice::Alto, 90), (53..=74).collect::<Vec<_>>());
        assert!(r.candidates(Voice::Alto, 50).is_empty());
    }

    #[test]
    fn ranges_drop_by_octaves_for_low_melodies() {
        let r = VoiceRanges::default();
        assert_eq!(r.fitted_to(&melody(&[60, 53])), r);
        let low = r.fitted_to(&melody(&[48, 50]));
        assert_eq!(low.alto, PitchRange::new(41, 62));
        assert_eq!(low.bass, PitchRange::new(28, 48));
        let very_low = r.fitted_to(&melody(&[2]));
        assert_eq!(very_low.bass.low, 0);
    }

    #[test]
    fn one_note_melody() {
        let m = melody(&[72]);
        let h = harmonize(&m, &mut RulebookScorer, &SamplerConfig::greedy(), 5.0).unwrap();
        h.arrangement.validate().unwrap();
        assert_eq!(h.arrangement.alto.len(), 1);
        assert_eq!(h.tokens.len(), 12);
    }

    #[test]
    fn empty_melody_is_an_error() {
        assert!(matches!(
            harmonize(&[], &mut UniformScorer, &SamplerConfig::default(), 5.0),
            Err(HarmonyError::EmptyMelody)
        ));
    }

    #[test]
    fn overlapping_melody_is_rejected() {
        let mut m = melody(&[60, 62]);
        m[1].onset = Ticks(10);
        assert!(matches!(
            harmonize(&m, &mut UniformScorer, &SamplerConfig::default(), 5.0),
            Err(HarmonyError::InvalidMelody(_))
        ));
    }

    struct Broken(Vec<f64>);

    impl NoteScorer for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn score(&mut self, _: &ScoringContext<'_>, c: &[u8]) -> Result<Vec<f64>, HarmonyError> {
            Ok(self.0.iter().copied().cycle().take(c.len()).collect())
        }
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let m = melody(&[67]);
        let err = harmonize(&m, &mut Broken(vec![0.0, f64::NAN]), &SamplerConfig::default(), 5.0).unwrap_err();
        assert!(matches!(err, HarmonyError::NonFiniteScore { .. }));
    }

    struct Short;

    impl NoteScorer for Short {
        fn name(&self) -> &str {
            "short"
        }
        fn score(&mut self, _: &ScoringContext<'_>, _: &[u8]) -> Result<Vec<f64>, HarmonyError> {
            Ok(vec![0.0])
        }
    }

    #[test]
    fn wrong_score_count_is_rejected() {
        let err = harmonize(&melody(&[67]), &mut Short, &SamplerConfig::default(), 5.0).unwrap_err();
        assert!(matches!(err, HarmonyError::ScoreCount { expected: 15, got: 1, .. }));
    }

    #[test]
    fn masked_entries_get_zero_probability() {
        let m = melody(&[67, 69, 71, 72]);
        let h = harmonize_traced(&m, &mut UniformScorer, &SamplerConfig::default(), 5.0).unwrap();
        assert_eq!(h.trace.len(), 12);
        for step in &h.trace {
            for (idx, &p) in step.probabilities.iter().enumerate() {
                let (v, pitch) = tokenizer::split_note_value(idx as u32).unwrap();
                if v != step.voice || !step.candidates.contains(&pitch) {
                    assert_eq!(p, 0.0);
                }
            }
            let total: f64 = step.probabilities.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn token_stream_matches_encoder() {
        let m = melody(&[67, 69, 71, 72, 74, 72, 71, 69]);
        for delta in [0.2, 1.0, 5.0] {
            let h = harmonize(&m, &mut UniformScorer, &SamplerConfig { seed: 9, ..Default::default() }, delta).unwrap();
            let re = tokenizer::encode(&h.arrangement.soprano, &h.arrangement.harmony_events(), delta).unwrap();
            assert_eq!(re, h.tokens);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let m = melody(&[67, 69, 71, 72, 74]);
        let cfg = SamplerConfig { seed: 42, temperature: 1.5, ..Default::default() };
        let a = harmonize(&m, &mut UniformScorer, &cfg, 5.0).unwrap().arrangement;
        let b = harmonize(&m, &mut UniformScorer, &cfg, 5.0).unwrap().arrangement;
        assert_eq!(a, b);
    }
}
