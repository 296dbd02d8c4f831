//! Stand-alone reference for greedy rulebook decoding and for the
//! structural rules every arrangement must satisfy. Shares no code with
//! the engine beyond the public data types.

use harmonizer::harmony::{DecodeStep, Harmonization};
use harmonizer::note::NoteEvent;

const MAJOR: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
const MINOR: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

/// Default (low, high) for alto, tenor, bass.
pub const RANGES: [(i32, i32); 3] = [(53, 74), (48, 67), (40, 60)];

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// (tonic, is_major)
pub fn key(melody: &[NoteEvent]) -> (i32, bool) {
    let mut hist = [0.0; 12];
    for n in melody {
        hist[n.pitch as usize % 12] += n.duration.0 as f64;
    }
    let mut best = (0, true);
    let mut best_r = f64::NEG_INFINITY;
    for tonic in 0..12 {
        let rotated: Vec<f64> = (0..12).map(|i| hist[(i + tonic) % 12]).collect();
        for (major, profile) in [(true, &MAJOR), (false, &MINOR)] {
            let r = pearson(&rotated, profile);
            if r > best_r {
                best_r = r;
                best = (tonic as i32, major);
            }
        }
    }
    best
}

/// Preferred diatonic triad containing `pc`, as pitch classes.
pub fn triad(key: (i32, bool), pc: i32) -> Vec<i32> {
    let (tonic, major) = key;
    let chords: [[i32; 3]; 7] = if major {
        [[0, 4, 7], [7, 11, 14], [5, 9, 12], [9, 12, 16], [2, 5, 9], [4, 7, 11], [11, 14, 17]]
    } else {
        [[0, 3, 7], [7, 11, 14], [5, 8, 12], [8, 12, 15], [3, 7, 10], [10, 14, 17], [2, 5, 8]]
    };
    for c in chords {
        let pcs: Vec<i32> = c.iter().map(|x| (x + tonic).rem_euclid(12)).collect();
        if pcs.contains(&pc) {
            return pcs;
        }
    }
    vec![pc, (pc + 4) % 12, (pc + 7) % 12]
}

/// Ranges after dropping octaves until the alto floor reaches the melody.
pub fn fitted_ranges(melody: &[NoteEvent]) -> [(i32, i32); 3] {
    let lowest = melody.iter().map(|n| n.pitch as i32).min().unwrap();
    let mut shift = 0;
    while RANGES[0].0 - shift > lowest {
        shift += 12;
    }
    RANGES.map(|(lo, hi)| ((lo - shift).max(0), (hi - shift).max(0)))
}

/// Greedy rulebook decode by enumerating all 128 pitches per decision.
/// Returns rows of [S, A, T, B].
pub fn greedy_rulebook(melody: &[NoteEvent]) -> Vec<[i32; 4]> {
    let k = key(melody);
    let ranges = fitted_ranges(melody);
    let mut rows: Vec<[i32; 4]> = Vec::new();
    for note in melody {
        let s = note.pitch as i32;
        let mut row = [s, -1, -1, -1];
        let chord = triad(k, s % 12);
        for v in 1..4 {
            let (lo, hi) = ranges[v - 1];
            let mut best: Option<(i32, i32)> = None;
            for p in 0..128 {
                if p < lo || p > hi || p > row[v - 1] {
                    continue;
                }
                let mut cost = match rows.last() {
                    Some(prev) => (p - prev[v]).abs() * 2,
                    None => (2 * p - lo - hi).abs(),
                };
                // costs are doubled so the half-integer range centre stays exact
                if !chord.contains(&(p % 12)) {
                    cost += 20;
                }
                if let Some(prev) = rows.last() {
                    for o in 0..v {
                        let before = (prev[v] - prev[o]).abs() % 12;
                        let after = (p - row[o]).abs() % 12;
                        let perfect = before == 0 || before == 7;
                        if perfect && before == after && prev[v] != p && prev[o] != row[o] {
                            cost += 6;
                        }
                    }
                }
                if row[v - 1] - p > 12 {
                    cost += 4;
                }
                if best.is_none_or(|(_, c)| cost < c) {
                    best = Some((p, cost));
                }
            }
            row[v] = best.expect("fitted ranges always leave a candidate").0;
        }
        rows.push(row);
    }
    rows
}

pub fn rows(h: &Harmonization) -> Vec<[i32; 4]> {
    let a = &h.arrangement;
    (0..a.len())
        .map(|i| [a.soprano[i].pitch, a.alto[i].pitch, a.tenor[i].pitch, a.bass[i].pitch].map(|p| p as i32))
        .collect()
}

/// Every structural rule; returns a description of the first violation.
pub fn check_structure(melody: &[NoteEvent], h: &Harmonization, delta: f64) -> Result<(), String> {
    let a = &h.arrangement;
    if a.soprano != melody {
        return Err("soprano differs from the melody".into());
    }
    let ranges = fitted_ranges(melody);
    let lists = [&a.alto, &a.tenor, &a.bass];
    for (vi, notes) in lists.iter().enumerate() {
        if notes.len() != melody.len() {
            return Err(format!("voice {} has {} notes for {}", vi + 1, notes.len(), melody.len()));
        }
        for (n, m) in notes.iter().zip(melody) {
            if n.onset != m.onset || n.duration != m.duration {
                return Err(format!("voice {} note at {} not aligned with control at {}", vi + 1, n.onset, m.onset));
            }
            let (lo, hi) = ranges[vi];
            if (n.pitch as i32) < lo || (n.pitch as i32) > hi {
                return Err(format!("voice {} pitch {} outside {lo}..={hi}", vi + 1, n.pitch));
            }
            if n.voice as usize != vi + 1 {
                return Err("voice tag mismatch".into());
            }
        }
    }
    for r in rows(h) {
        if !(r[0] >= r[1] && r[1] >= r[2] && r[2] >= r[3]) {
            return Err(format!("voice crossing in {r:?}"));
        }
    }
    let expected = harmonizer::tokenizer::encode(melody, &a.harmony_events(), delta).map_err(|e| e.to_string())?;
    if expected != h.tokens {
        return Err("token stream differs from the encoder".into());
    }
    if !h.trace.is_empty() {
        check_masking(&h.trace, &rows(h), &ranges)?;
    }
    Ok(())
}

fn check_masking(trace: &[DecodeStep], rows: &[[i32; 4]], ranges: &[(i32, i32); 3]) -> Result<(), String> {
    if trace.len() != 3 * rows.len() {
        return Err(format!("{} decode steps for {} notes", trace.len(), rows.len()));
    }
    for step in trace {
        let v = step.voice as usize;
        let ceiling = rows[step.step][v - 1];
        let (lo, hi) = ranges[v - 1];
        let mut total = 0.0;
        for (value, &p) in step.probabilities.iter().enumerate() {
            let (voice, pitch) = (value / 128, (value % 128) as i32);
            let allowed = voice == v && pitch >= lo && pitch <= hi && pitch <= ceiling;
            if !allowed && p != 0.0 {
                return Err(format!("mass {p} on masked token {value} at step {} {:?}", step.step, step.voice));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability {p} out of [0, 1]"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("distribution sums to {total}"));
        }
        if step.chosen as i32 != rows[step.step][v] {
            return Err("trace disagrees with the arrangement".into());
        }
    }
    Ok(())
}
