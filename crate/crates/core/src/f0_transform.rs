//! Piecewise transposition of the input f0 contour.
//!
//! Given segment onsets `t_1 < t_2 < ... < t_N` and semitone offsets `h_i`,
//! every frame at time `t` with `t_i <= t < t_{i+1}` is multiplied by
//! `2^(h_i / 12)`; the last segment runs to the end of the curve. Frames
//! before `t_1` are unvoiced in the output.

use thiserror::Error;

use crate::exec::{self, Execution};
use crate::harmony::Arrangement;
use crate::note::{NoteEvent, Ticks, Voice};
use crate::pitch::{F0Curve, F0Frame};

/// Largest accepted |offset|, in semitones.
pub const MAX_OFFSET: i32 = 48;
/// Shifted frequencies outside this band become unvoiced.
pub const MIN_SHIFTED_HZ: f64 = 20.0;
pub const MAX_SHIFTED_HZ: f64 = 4000.0;

#[derive(Debug, Error, PartialEq)]
pub enum ShiftError {
    #[error("melody has {melody} notes but the harmony voice has {harmony}")]
    LengthMismatch { melody: usize, harmony: usize },
    #[error("segment onsets must strictly increase (segment {0})")]
    UnsortedOnsets(usize),
    #[error("offset {offset} at segment {index} exceeds {MAX_OFFSET} semitones")]
    OffsetTooLarge { index: usize, offset: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub onset: Ticks,
    /// Harmony pitch minus melody pitch.
    pub offset: i32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShiftPlan {
    segments: Vec<Segment>,
}

impl ShiftPlan {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ShiftError> {
        for (i, s) in segments.iter().enumerate() {
            if s.offset.abs() > MAX_OFFSET {
                return Err(ShiftError::OffsetTooLarge { index: i, offset: s.offset });
            }
            if i > 0 && s.onset <= segments[i - 1].onset {
                return Err(ShiftError::UnsortedOnsets(i));
            }
        }
        Ok(ShiftPlan { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn offsets(&self) -> Vec<i32> {
        self.segments.iter().map(|s| s.offset).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// The segment that frame `frame` falls in, if any.
    pub fn segment_at(&self, frame: usize) -> Option<&Segment> {
        let idx = self.segments.partition_point(|s| s.onset.0 as usize <= frame);
        idx.checked_sub(1).map(|i| &self.segments[i])
    }

    /// The same segments with every offset negated.
    pub fn inverted(&self) -> ShiftPlan {
        ShiftPlan { segments: self.segments.iter().map(|s| Segment { onset: s.onset, offset: -s.offset }).collect() }
    }
}

pub fn build_shift_plan(melody: &[NoteEvent], harmony: &[NoteEvent]) -> Result<ShiftPlan, ShiftError> {
    if melody.len() != harmony.len() {
        return Err(ShiftError::LengthMismatch { melody: melody.len(), harmony: harmony.len() });
    }
    ShiftPlan::new(
        melody
            .iter()
            .zip(harmony)
            .map(|(m, h)| Segment { onset: m.onset, offset: h.pitch as i32 - m.pitch as i32 })
            .collect(),
    )
}

/// Frequency ratio of a semitone offset.
pub fn semitone_ratio(offset: i32) -> f64 {
    2f64.powf(offset as f64 / 12.0)
}

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

/// Output of [`shift_f0`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCurve {
    pub curve: F0Curve,
    /// Voiced frames dropped because the shifted frequency left the band.
    pub out_of_range: usize,
}

pub fn shift_f0(f0_in: &F0Curve, plan: &ShiftPlan) -> ShiftedCurve {
    let ratios: Vec<f64> = plan.segments.iter().map(|s| semitone_ratio(s.offset)).collect();
    let mut out_of_range = 0;
    let mut seg = 0usize;
    let frames = f0_in
        .frames()
        .iter()
        .enumerate()
        .map(|(k, frame)| {
            while seg + 1 < plan.segments.len() && plan.segments[seg + 1].onset.0 as usize <= k {
                seg += 1;
            }
            let active = plan.segments.get(seg).filter(|s| s.onset.0 as usize <= k);
            match (active, frame.f0) {
                (Some(_), Some(f)) => {
                    let shifted = f * ratios[seg];
                    if (MIN_SHIFTED_HZ..=MAX_SHIFTED_HZ).contains(&shifted) {
                        F0Frame::voiced(shifted, frame.periodicity)
                    } else {
                        out_of_range += 1;
                        F0Frame { f0: None, periodicity: frame.periodicity }
                    }
                }
                (None, _) => F0Frame { f0: None, periodicity: frame.periodicity },
                (Some(_), None) => *frame,
            }
        })
        .collect();
    ShiftedCurve { curve: F0Curve::new(frames), out_of_range }
}

/// Target curves for alto, tenor and bass, in that order.
pub fn voice_targets(
    arr: &Arrangement,
    f0_in: &F0Curve,
    exec: Execution,
) -> Result<Vec<(Voice, ShiftedCurve)>, ShiftError> {
    let plans = Voice::HARMONY
        .iter()
        .map(|&v| build_shift_plan(&arr.soprano, arr.voice(v)).map(|p| (v, p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(exec::map_slice(exec, &plans, |(v, p)| (*v, shift_f0(f0_in, p))))
}
