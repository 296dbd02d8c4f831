use std::f64::consts::PI;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use harmonizer::audio::{resample, AudioBuffer, INTERNAL_RATE};
use harmonizer::exec::Execution;
use harmonizer::harmony::{harmonize, RulebookScorer, SamplerConfig};
use harmonizer::pitch::{extract_f0_with, transcribe, TrackerConfig};
use harmonizer::synth::{render_arrangement, SynthConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

/// Ten seconds of a stepped melody with a few harmonics.
fn tune() -> AudioBuffer {
    let sr = INTERNAL_RATE as f64;
    let mut phase = 0.0f64;
    let samples = (0..(10.0 * sr) as usize)
        .map(|i| {
            let step = [60, 62, 64, 65, 67, 69, 71, 72][(i as f64 / sr / 0.5) as usize % 8];
            phase += 2.0 * PI * 440.0 * 2f64.powf((step as f64 - 69.0) / 12.0) / sr;
            (0.3 * phase.sin() + 0.1 * (2.0 * phase).sin()) as f32
        })
        .collect();
    AudioBuffer::new(samples, INTERNAL_RATE).unwrap()
}

fn bench(c: &mut Criterion) {
    let audio = tune();
    let f0 = extract_f0_with(&audio, &TrackerConfig::default(), Execution::Parallel);
    let melody = transcribe(&f0);
    let arr = harmonize(&melody, &mut RulebookScorer, &SamplerConfig::greedy(), 5.0).unwrap().arrangement;
    let raw: Vec<f64> = audio.samples().iter().map(|&s| s as f64).collect();

    let mut g = c.benchmark_group("extract_f0_10s");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| extract_f0_with(&audio, &TrackerConfig::default(), exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("resample_10s_44k1_to_48k");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| resample(&raw, INTERNAL_RATE, 48_000, exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("render_arrangement_10s");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| render_arrangement(&audio, &arr, &f0, &SynthConfig::default(), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).warm_up_time(Duration::from_secs(1));
    targets = bench
}
criterion_main!(benches);
