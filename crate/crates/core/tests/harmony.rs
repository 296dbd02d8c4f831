mod common;

use common::oracle;
use harmonizer::harmony::{
    harmonize, harmonize_traced, train_markov, MarkovModel, MarkovScorer, NoteScorer, RulebookScorer, SamplerConfig,
    UniformScorer,
};
use harmonizer::note::{NoteEvent, Ticks, Voice};
use midly::num::{u15, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn greedy_rulebook_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let n = rand::Rng::gen_range(&mut rng, 1..=8);
        let melody = common::random_melody(&mut rng, n, 55, 84);
        let h = harmonize(&melody, &mut RulebookScorer, &SamplerConfig::greedy(), 5.0).unwrap();
        assert_eq!(oracle::rows(&h), oracle::greedy_rulebook(&melody), "melody {melody:?}");
    }
}

#[test]
fn oracle_key_agrees_with_engine() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let melody = common::random_melody(&mut rng, 6, 48, 90);
        let k = harmonizer::harmony::key_estimate(&melody);
        let (tonic, major) = oracle::key(&melody);
        assert_eq!((k.tonic as i32, k.mode == harmonizer::harmony::Mode::Major), (tonic, major));
    }
}

#[test]
fn structure_holds_for_every_backend() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = toy_model();
    for i in 0..60 {
        let melody = common::random_melody(&mut rng, 1 + i % 12, 40, 90);
        let backends: Vec<Box<dyn NoteScorer>> =
            vec![Box::new(RulebookScorer), Box::new(MarkovScorer::new(model.clone())), Box::new(UniformScorer)];
        for mut b in backends {
            for seed in 0..3 {
                let cfg = SamplerConfig { seed, temperature: 1.0, top_p: 0.9, ..Default::default() };
                let h = harmonize_traced(&melody, b.as_mut(), &cfg, 5.0).unwrap();
                if let Err(e) = oracle::check_structure(&melody, &h, 5.0) {
                    panic!("{} seed {seed}: {e}", b.name());
                }
            }
        }
    }
}

#[test]
fn same_seed_same_result() {
    let melody = common::random_melody(&mut ChaCha8Rng::seed_from_u64(3), 10, 60, 81);
    let cfg = SamplerConfig { seed: 42, ..Default::default() };
    let a = harmonize(&melody, &mut UniformScorer, &cfg, 5.0).unwrap();
    let b = harmonize(&melody, &mut UniformScorer, &cfg, 5.0).unwrap();
    assert_eq!(a.arrangement, b.arrangement);
    let other = (0..20)
        .map(|s| harmonize(&melody, &mut UniformScorer, &SamplerConfig { seed: s, ..cfg.clone() }, 5.0).unwrap())
        .any(|h| h.arrangement != a.arrangement);
    assert!(other, "seed has no effect");
}

#[test]
fn low_melody_still_harmonizes() {
    let melody: Vec<NoteEvent> = [45u8, 40, 43]
        .iter()
        .enumerate()
        .map(|(i, &p)| NoteEvent::new(Ticks(i as u32 * 30), Ticks(30), p, Voice::Soprano))
        .collect();
    let h = harmonize_traced(&melody, &mut RulebookScorer, &SamplerConfig::greedy(), 5.0).unwrap();
    oracle::check_structure(&melody, &h, 5.0).unwrap();
}

fn note_track(channel: u8, notes: &[(u32, u32, u8)]) -> Vec<TrackEvent<'static>> {
    let ch = u4::new(channel);
    let mut evs = vec![TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Midi { channel: ch, message: MidiMessage::ProgramChange { program: u7::new(channel) } },
    }];
    let mut now = 0;
    for &(start, end, key) in notes {
        evs.push(TrackEvent {
            delta: u28::new(start - now),
            kind: TrackEventKind::Midi {
                channel: ch,
                message: MidiMessage::NoteOn { key: u7::new(key), vel: u7::new(90) },
            },
        });
        evs.push(TrackEvent {
            delta: u28::new(end - start),
            kind: TrackEventKind::Midi {
                channel: ch,
                message: MidiMessage::NoteOff { key: u7::new(key), vel: u7::new(0) },
            },
        });
        now = end;
    }
    evs.push(TrackEvent { delta: u28::new(0), kind: TrackEventKind::Meta(MetaMessage::EndOfTrack) });
    evs
}

/// Two soprano notes over a held alto, moving tenor and bass.
fn toy_chorale() -> Vec<u8> {
    let smf = Smf {
        header: Header::new(Format::Parallel, Timing::Metrical(u15::new(480))),
        tracks: vec![
            note_track(0, &[(0, 480, 72), (480, 960, 74)]),
            note_track(1, &[(0, 960, 67)]),
            note_track(2, &[(0, 480, 60), (480, 960, 59)]),
            note_track(3, &[(0, 480, 48), (480, 960, 43)]),
        ],
    };
    let mut out = Vec::new();
    smf.write_std(&mut out).unwrap();
    out
}

fn toy_model() -> MarkovModel {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.mid"), toy_chorale()).unwrap();
    train_markov(dir.path()).unwrap()
}

#[test]
fn markov_counts_match_hand_tally() {
    use harmonizer::harmony::markov::{Context, VOCAB_SIZE};
    let m = toy_model();
    let ctx = |pc, voice, prev| Context { melody_pc: pc, voice, prev_offset: prev };
    // alto 67 against 72 then 74
    assert_eq!(m.count(&ctx(0, 1, None), -5), 1);
    assert_eq!(m.count(&ctx(2, 1, Some(-5)), -7), 1);
    // tenor 60 then 59
    assert_eq!(m.count(&ctx(0, 2, None), -12), 1);
    assert_eq!(m.count(&ctx(2, 2, Some(-12)), -15), 1);
    // bass 48 then 43
    assert_eq!(m.count(&ctx(0, 3, None), -24), 1);
    assert_eq!(m.count(&ctx(2, 3, Some(-24)), -31), 1);
    assert_eq!(m.contexts().count(), 6);
    let p = m.probability(&ctx(2, 3, Some(-24)), -31);
    assert_eq!(p, 2.0 / (1.0 + VOCAB_SIZE as f64));
}

#[test]
fn retraining_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.mid"), toy_chorale()).unwrap();
    let melody = common::random_melody(&mut ChaCha8Rng::seed_from_u64(1), 8, 62, 79);
    let h = harmonize(&melody, &mut RulebookScorer, &SamplerConfig::greedy(), 5.0).unwrap();
    harmonizer::midi::export_midi(&h.arrangement, dir.path().join("b.mid")).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "not midi").unwrap();
    let first = train_markov(dir.path()).unwrap();
    let second = train_markov(dir.path()).unwrap();
    assert_eq!(first.to_json(), second.to_json());
    let path = dir.path().join("model.json");
    first.save(&path).unwrap();
    assert_eq!(MarkovModel::load(&path).unwrap().to_json(), first.to_json());
}

#[test]
fn markov_prefers_what_it_was_taught() {
    let m = toy_model();
    let melody = vec![
        NoteEvent::new(Ticks(0), Ticks(50), 72, Voice::Soprano),
        NoteEvent::new(Ticks(50), Ticks(50), 74, Voice::Soprano),
    ];
    let h = harmonize(&melody, &mut MarkovScorer::new(m), &SamplerConfig::greedy(), 5.0).unwrap();
    assert_eq!(oracle::rows(&h), vec![[72, 67, 60, 48], [74, 67, 59, 43]]);
}
