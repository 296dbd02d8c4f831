use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use harmonizer::exec::Execution;
use harmonizer::pipeline::{self, Backend, FileConfig, OutputMode, PipelineConfig, PipelineError};

/// Turn a sung melody into a four-part vocal arrangement.
#[derive(Parser, Debug)]
#[command(name = "harmonize", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the Markov backend on a directory of four-track MIDI files.
    TrainMarkov {
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Input WAV file.
    input: Option<PathBuf>,
    /// Output base path; writes <out>.mix.wav and, with --stems, one file per voice.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    backend: Option<Backend>,
    /// Anticipation interval in seconds.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// 0 selects greedy decoding.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    /// Also write the alto, tenor and bass stems.
    #[arg(long)]
    stems: bool,
    /// Write the arrangement as a MIDI file.
    #[arg(long, value_name = "PATH")]
    midi: Option<PathBuf>,
    /// Print per-stage timings as JSON on stdout.
    #[arg(long)]
    bench: bool,
    /// Write f0 curves, tokens and MIDI here.
    #[arg(long, value_name = "DIR")]
    debug_dir: Option<PathBuf>,
    #[arg(long, value_name = "CMD", conflicts_with = "external_addr")]
    external_cmd: Option<String>,
    #[arg(long, value_name = "HOST:PORT")]
    external_addr: Option<String>,
    #[arg(long, value_name = "PATH")]
    markov_model: Option<PathBuf>,
    /// TOML file with defaults; flags take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    no_envelope: bool,
    #[arg(long)]
    no_consonants: bool,
    /// Run every stage on one thread.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(&FileConfig::load(path)?);
        }
        macro_rules! flag {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                }
            )*};
        }
        flag!(backend, delta, seed, temperature, top_p, midi, debug_dir, markov_model, external_cmd, external_addr);
        if self.external_cmd.is_some() {
            cfg.external_addr = None;
        } else if self.external_addr.is_some() {
            cfg.external_cmd = None;
        }
        if self.stems {
            cfg.output = OutputMode::Both;
        }
        cfg.bench |= self.bench;
        cfg.synth.envelope_correction &= !self.no_envelope;
        cfg.synth.consonant_passthrough &= !self.no_consonants;
        if self.sequential {
            cfg.exec = Execution::Sequential;
        }
        Ok(cfg)
    }
}

fn fail(e: &PipelineError) -> ExitCode {
    eprintln!("harmonize: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(Command::TrainMarkov { corpus, output }) = &cli.command {
        return match pipeline::train(corpus, output) {
            Ok(model) => {
                eprintln!("trained {} contexts into {}", model.contexts().count(), output.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        };
    }

    let args = cli.run;
    let (Some(input), Some(output)) = (&args.input, &args.output) else {
        eprintln!("harmonize: an input file and -o <out> are required (see --help)");
        return ExitCode::from(2);
    };
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match pipeline::run(input, output, &cfg) {
        Ok(report) => {
            if cfg.bench {
                println!("{}", report.timings.to_json());
            }
            let dropped: usize = report.out_of_range.iter().sum();
            if dropped > 0 {
                eprintln!("harmonize: {dropped} frames left the synthesizable range and were muted");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
