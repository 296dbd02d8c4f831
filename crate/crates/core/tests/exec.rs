mod common;

use harmonizer::audio::{resample, INTERNAL_RATE};
use harmonizer::exec::Execution;
use harmonizer::harmony::{harmonize, RulebookScorer, SamplerConfig};
use harmonizer::pipeline::{self, PipelineConfig};
use harmonizer::pitch::{extract_f0_with, transcribe, TrackerConfig};
use harmonizer::synth::{render_arrangement, SynthConfig};

#[test]
fn strategies_agree_bit_for_bit() {
    let audio = common::sine_scale();
    let cfg = TrackerConfig::default();
    let f0 = extract_f0_with(&audio, &cfg, Execution::Parallel);
    assert_eq!(f0, extract_f0_with(&audio, &cfg, Execution::Sequential));

    let raw: Vec<f64> = audio.samples()[..20_000].iter().map(|&s| s as f64).collect();
    assert_eq!(
        resample(&raw, INTERNAL_RATE, 48_000, Execution::Parallel),
        resample(&raw, INTERNAL_RATE, 48_000, Execution::Sequential)
    );

    let arr = harmonize(&transcribe(&f0), &mut RulebookScorer, &SamplerConfig::greedy(), 5.0).unwrap().arrangement;
    let par = render_arrangement(&audio, &arr, &f0, &SynthConfig::default(), Execution::Parallel).unwrap();
    let seq = render_arrangement(&audio, &arr, &f0, &SynthConfig::default(), Execution::Sequential).unwrap();
    assert_eq!(par.stems, seq.stems);
    assert_eq!(par.mixdown, seq.mixdown);
}

#[test]
fn pipeline_output_does_not_depend_on_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    common::write_wav(&common::sine_scale(), &input);
    for (name, exec) in [("p", Execution::Parallel), ("s", Execution::Sequential)] {
        let cfg = PipelineConfig { seed: 42, exec, ..Default::default() };
        pipeline::run(&input, &dir.path().join(name), &cfg).unwrap();
    }
    assert!(
        std::fs::read(dir.path().join("p.mix.wav")).unwrap() == std::fs::read(dir.path().join("s.mix.wav")).unwrap()
    );
}
