//! Deterministic voice-leading scorer.
//!
//! The cost of giving `voice` the pitch `p` at the current step is the sum of
//!
//! * motion: `|p - previous pitch of the voice|`, or the distance to the
//!   centre of the voice's range on the first step;
//! * 10 if `p`'s pitch class is outside the preferred diatonic triad that
//!   contains the melody's pitch class;
//! * 3 for each parallel fifth or octave (unisons included) formed with a
//!   voice that is already fixed at this step, when both voices move;
//! * 2 if `p` sits more than an octave below the voice directly above.
//!
//! The score is the negated cost.

use super::{best_triad, HarmonyError, NoteScorer, ScoringContext};
use crate::note::Voice;

pub const NON_CHORD_TONE_COST: f64 = 10.0;
pub const PARALLEL_COST: f64 = 3.0;
pub const SPACING_COST: f64 = 2.0;
pub const MAX_SPACING: u8 = 12;

#[derive(Debug, Clone, Copy, Default)]
pub struct RulebookScorer;

/// Individual terms of the rulebook cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub motion: f64,
    pub non_chord_tone: f64,
    pub parallels: f64,
    pub spacing: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.motion + self.non_chord_tone + self.parallels + self.spacing
    }
}

fn is_perfect(a: u8, b: u8) -> Option<u8> {
    let class = a.abs_diff(b) % 12;
    (class == 0 || class == 7).then_some(class)
}

/// Voice-leading cost of `pitch` for the voice being decoded in `ctx`.
pub fn cost(ctx: &ScoringContext<'_>, pitch: u8) -> CostBreakdown {
    let voice = ctx.voice;
    let motion = match ctx.previous(voice) {
        Some(prev) => prev.abs_diff(pitch) as f64,
        None => (pitch as f64 - ctx.ranges.get(voice).center()).abs(),
    };
    let mut c = CostBreakdown { motion, ..Default::default() };

    if !best_triad(ctx.key, ctx.melody_pitch() % 12).contains(&(pitch % 12)) {
        c.non_chord_tone = NON_CHORD_TONE_COST;
    }

    if let Some(prev_chord) = ctx.history.last() {
        let prev = prev_chord[voice.index()];
        for other in Voice::ALL {
            let Some(now_other) = ctx.current[other.index()] else { continue };
            if other == voice {
                continue;
            }
            let prev_other = prev_chord[other.index()];
            let both_move = prev != pitch && prev_other != now_other;
            if let (Some(before), Some(after)) = (is_perfect(prev, prev_other), is_perfect(pitch, now_other)) {
                if both_move && before == after {
                    c.parallels += PARALLEL_COST;
                }
            }
        }
    }

    if let Some(above) = voice.upper().and_then(|u| ctx.current[u.index()]) {
        if above.saturating_sub(pitch) > MAX_SPACING {
            c.spacing = SPACING_COST;
        }
    }
    c
}

impl NoteScorer for RulebookScorer {
    fn name(&self) -> &str {
        "rulebook"
    }

    fn score(&mut self, ctx: &ScoringContext<'_>, candidates: &[u8]) -> Result<Vec<f64>, HarmonyError> {
        Ok(candidates.iter().map(|&p| -cost(ctx, p).total()).collect())
    }
}
