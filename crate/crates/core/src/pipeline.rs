//! End-to-end harmonization of a recording.
//!
//! load → f0 tracking → transcription → harmony decoding → f0 shifting →
//! resynthesis → mix. All artifacts are rendered in memory and written at
//! the end, so a failing stage leaves nothing behind.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioBuffer, BitDepth};
use crate::exec::Execution;
use crate::f0_transform;
use crate::harmony::{
    self, markov::MarkovError, Arrangement, ExternalScorer, Key, MarkovModel, MarkovScorer, NoteScorer, RulebookScorer,
    SamplerConfig, UniformScorer,
};
use crate::midi;
use crate::note::Voice;
use crate::pitch::{self, F0Curve, TrackerConfig};
use crate::synth::{self, SynthConfig};
use crate::tokenizer::{self, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Rulebook,
    Markov,
    External,
    /// Flat scores; sampling alone picks the notes.
    Uniform,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rulebook" => Ok(Backend::Rulebook),
            "markov" => Ok(Backend::Markov),
            "external" => Ok(Backend::External),
            "uniform" => Ok(Backend::Uniform),
            _ => Err(format!("unknown backend `{s}` (expected rulebook, markov, external or uniform)")),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Rulebook => "rulebook",
            Backend::Markov => "markov",
            Backend::External => "external",
            Backend::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    Mix,
    Stems,
    Both,
}

impl OutputMode {
    fn mix(self) -> bool {
        matches!(self, OutputMode::Mix | OutputMode::Both)
    }

    fn stems(self) -> bool {
        matches!(self, OutputMode::Stems | OutputMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub backend: Backend,
    /// Anticipation interval in seconds.
    pub delta: f64,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    pub output: OutputMode,
    pub midi: Option<PathBuf>,
    pub bench: bool,
    pub debug_dir: Option<PathBuf>,
    pub markov_model: Option<PathBuf>,
    pub external_cmd: Option<String>,
    pub external_addr: Option<String>,
    pub synth: SynthConfig,
    pub exec: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: Backend::Rulebook,
            delta: tokenizer::DEFAULT_DELTA,
            temperature: 1.0,
            top_p: 1.0,
            seed: 0,
            output: OutputMode::Mix,
            midi: None,
            bench: false,
            debug_dir: None,
            markov_model: None,
            external_cmd: None,
            external_addr: None,
            synth: SynthConfig::default(),
            exec: Execution::Parallel,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        self.sampler().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        match self.backend {
            Backend::Markov if self.markov_model.is_none() => bad("the markov backend needs --markov-model".into()),
            Backend::External => match (&self.external_cmd, &self.external_addr) {
                (None, None) => bad("the external backend needs --external-cmd or --external-addr".into()),
                (Some(_), Some(_)) => bad("--external-cmd and --external-addr are mutually exclusive".into()),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { temperature: self.temperature, top_p: self.top_p, seed: self.seed, ..Default::default() }
    }

    /// Overlays every key set in `file`.
    pub fn apply_file(&mut self, file: &FileConfig) {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &file.$field {
                    self.$field = v.clone().into();
                }
            )*};
        }
        take!(
            backend,
            delta,
            temperature,
            top_p,
            seed,
            output,
            bench,
            midi,
            debug_dir,
            markov_model,
            external_cmd,
            external_addr
        );
        if let Some(v) = file.envelope_correction {
            self.synth.envelope_correction = v;
        }
        if let Some(v) = file.consonant_passthrough {
            self.synth.consonant_passthrough = v;
        }
        if let Some(true) = file.sequential {
            self.exec = Execution::Sequential;
        }
    }
}

/// Optional settings read from a TOML file. Command-line flags override it.
///
/// ```toml
/// backend = "markov"
/// markov_model = "model.json"
/// delta = 5.0
/// seed = 42
/// output = "both"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<Backend>,
    pub delta: Option<f64>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<OutputMode>,
    pub midi: Option<PathBuf>,
    pub bench: Option<bool>,
    pub debug_dir: Option<PathBuf>,
    pub markov_model: Option<PathBuf>,
    pub external_cmd: Option<String>,
    pub external_addr: Option<String>,
    pub envelope_correction: Option<bool>,
    pub consonant_passthrough: Option<bool>,
    pub sequential: Option<bool>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("config file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io("config", path, e))?;
        Self::parse(&text)
    }
}

/// Wall-clock time per stage, in milliseconds.
///
/// `f0_ms` covers tracking the input and shifting the three target curves;
/// `synthesis_ms` covers resynthesis and mixing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub transcription_ms: f64,
    pub harmony_ms: f64,
    pub f0_ms: f64,
    pub synthesis_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("timings serialize")
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {reason}")]
    Io { stage: &'static str, path: String, reason: String },
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    fn io(stage: &'static str, path: &Path, reason: impl fmt::Display) -> Self {
        let path = path.display().to_string();
        let mut reason = reason.to_string();
        if !reason.contains(&path) {
            reason = format!("{path}: {reason}");
        }
        PipelineError::Io { stage, path, reason }
    }

    fn stage(stage: &'static str, message: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, message: message.to_string() }
    }

    /// Process exit status: 2 bad arguments, 3 I/O, 4 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Io { .. } => 3,
            PipelineError::Stage { .. } => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub timings: StageTimings,
    pub key: Option<Key>,
    pub melody_notes: usize,
    /// Frames per harmony voice whose shifted f0 left the synthesizable band.
    pub out_of_range: [usize; 3],
    pub written: Vec<PathBuf>,
}

/// `out` with a trailing `.wav` removed.
pub fn output_base(out: &Path) -> PathBuf {
    let s = out.as_os_str().to_string_lossy();
    if s.len() > 4 && s[s.len() - 4..].eq_ignore_ascii_case(".wav") {
        PathBuf::from(&s[..s.len() - 4])
    } else {
        out.to_path_buf()
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn markov_err(path: &Path, e: MarkovError) -> PipelineError {
    match e {
        MarkovError::Io { reason, .. } => PipelineError::io("model", path, reason),
        other => PipelineError::stage("model", other),
    }
}

fn make_backend(cfg: &PipelineConfig) -> Result<Box<dyn NoteScorer>, PipelineError> {
    Ok(match cfg.backend {
        Backend::Rulebook => Box::new(RulebookScorer),
        Backend::Uniform => Box::new(UniformScorer),
        Backend::Markov => {
            let path = cfg.markov_model.as_deref().expect("validated");
            Box::new(MarkovScorer::new(MarkovModel::load(path).map_err(|e| markov_err(path, e))?))
        }
        Backend::External => {
            let scorer = match (&cfg.external_cmd, &cfg.external_addr) {
                (Some(cmd), _) => ExternalScorer::spawn(cmd),
                (None, Some(addr)) => ExternalScorer::connect(addr),
                (None, None) => unreachable!("validated"),
            };
            Box::new(scorer.map_err(|e| PipelineError::stage("harmony", e))?)
        }
    })
}

enum Artifact {
    Wav(AudioBuffer),
    Bytes(Vec<u8>),
}

/// Runs the whole pipeline on `input` and writes outputs next to `out`.
pub fn run(input: &Path, out: &Path, cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let mut backend = make_backend(cfg)?;
    let mut t = StageTimings::default();
    let ms = |since: Instant| since.elapsed().as_secs_f64() * 1e3;

    let audio = audio::load_audio(input).map_err(|e| PipelineError::io("load", input, e))?;

    let clock = Instant::now();
    let f0_in = pitch::extract_f0_with(&audio, &TrackerConfig::default(), cfg.exec);
    t.f0_ms += ms(clock);

    let clock = Instant::now();
    let melody = pitch::transcribe(&f0_in);
    t.transcription_ms = ms(clock);

    let clock = Instant::now();
    let (arrangement, tokens, key) = if melody.is_empty() {
        (Arrangement::empty(), TokenSequence { tokens: Vec::new(), delta: cfg.delta }, None)
    } else {
        let h = harmony::harmonize(&melody, backend.as_mut(), &cfg.sampler(), cfg.delta)
            .map_err(|e| PipelineError::stage("harmony", e))?;
        (h.arrangement, h.tokens, Some(h.key))
    };
    drop(backend);
    t.harmony_ms = ms(clock);

    let clock = Instant::now();
    let shifted =
        f0_transform::voice_targets(&arrangement, &f0_in, cfg.exec).map_err(|e| PipelineError::stage("f0", e))?;
    t.f0_ms += ms(clock);
    let mut out_of_range = [0; 3];
    for (slot, (_, s)) in out_of_range.iter_mut().zip(&shifted) {
        *slot = s.out_of_range;
    }
    let targets: Vec<(Voice, F0Curve)> = shifted.into_iter().map(|(v, s)| (v, s.curve)).collect();

    let clock = Instant::now();
    let voices = synth::render_voices(&audio, &f0_in, &targets, &cfg.synth, cfg.exec)
        .map_err(|e| PipelineError::stage("synthesis", e))?;
    let rendering = synth::assemble(&audio, voices, out_of_range).map_err(|e| PipelineError::stage("synthesis", e))?;
    t.synthesis_ms = ms(clock);

    let base = output_base(out);
    let mut artifacts: Vec<(PathBuf, Artifact)> = Vec::new();
    if cfg.output.mix() {
        artifacts.push((with_suffix(&base, ".mix.wav"), Artifact::Wav(rendering.mixdown.clone())));
    }
    if cfg.output.stems() {
        for (v, stem) in Voice::HARMONY.iter().zip(&rendering.stems[1..]) {
            artifacts.push((with_suffix(&base, &format!(".{}.wav", v.name())), Artifact::Wav(stem.clone())));
        }
    }
    if let Some(path) = &cfg.midi {
        artifacts.push((path.clone(), Artifact::Bytes(midi::arrangement_to_smf(&arrangement))));
    }
    if let Some(dir) = &cfg.debug_dir {
        let csv = |c: &F0Curve| {
            let mut buf = Vec::new();
            c.write_csv(&mut buf).expect("in-memory write");
            Artifact::Bytes(buf)
        };
        artifacts.push((dir.join("f0_input.csv"), csv(&f0_in)));
        for (v, c) in &targets {
            artifacts.push((dir.join(format!("f0_{}.csv", v.name())), csv(c)));
        }
        artifacts.push((dir.join("tokens.json"), Artifact::Bytes(tokens.to_json().into_bytes())));
        artifacts.push((dir.join("arrangement.mid"), Artifact::Bytes(midi::arrangement_to_smf(&arrangement))));
    }

    let written = write_all(&artifacts, cfg.debug_dir.as_deref())?;
    t.total_ms = ms(started);
    Ok(RunReport { timings: t, key, melody_notes: melody.len(), out_of_range, written })
}

/// Writes every artifact or, on the first failure, removes what was written.
fn write_all(artifacts: &[(PathBuf, Artifact)], debug_dir: Option<&Path>) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    let result = (|| {
        if let Some(dir) = debug_dir {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io("write", dir, e))?;
        }
        for (path, artifact) in artifacts {
            match artifact {
                Artifact::Wav(buf) => {
                    audio::save_audio(buf, path, BitDepth::Pcm16).map_err(|e| PipelineError::io("write", path, e))?
                }
                Artifact::Bytes(b) => fs::write(path, b).map_err(|e| PipelineError::io("write", path, e))?,
            }
            written.push(path.clone());
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

/// Trains a voice model from a MIDI corpus and writes it to `out`.
pub fn train(corpus: &Path, out: &Path) -> Result<MarkovModel, PipelineError> {
    let model = harmony::train_markov(corpus).map_err(|e| markov_err(corpus, e))?;
    model.save(out).map_err(|e| markov_err(out, e))?;
    Ok(model)
}
