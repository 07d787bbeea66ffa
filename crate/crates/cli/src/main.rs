//! `kfunc`: decode posterior lattices against reference phoneme sequences,
//! evaluate, score and report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use config::KEYS;

/// Failure classes with fixed exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kfunc", version, about = "Reference-guided phoneme transcription, evaluation and assessment")]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decode a lattice (or a manifest of lattices) against its reference.
    Decode(DecodeArgs),
    /// Best-path CTC decoding without a reference.
    Greedy(GreedyArgs),
    /// Phoneme error rate of hypothesis against reference transcripts.
    Eval(EvalArgs),
    /// Score one reading with the configured scoring backend.
    Score(ScoreArgs),
    /// Build an assessment report from decode and score outputs.
    Report(ReportArgs),
    /// Write a synthetic lattice and its ground-truth annotations.
    Synth(SynthArgs),
    /// Decode, evaluate, score and report in one run.
    Assess(AssessArgs),
}

#[derive(Args, Debug, Clone)]
struct Input {
    /// KWPO posterior file.
    #[arg(long, value_name = "FILE", conflicts_with = "manifest", requires = "reference", required_unless_present = "manifest")]
    posteriors: Option<PathBuf>,
    /// Reference phonemes, space separated.
    #[arg(long, value_name = "PHONEMES", conflicts_with = "manifest")]
    reference: Option<String>,
    /// Utterance id (default: the posterior file stem).
    #[arg(long)]
    id: Option<String>,
    /// TSV of `id, KWPO path, reference[, word count[, reference score]]`;
    /// relative paths resolve against the manifest's directory.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Worker threads for manifest runs; output stays in id order.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
    Text,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[command(flatten)]
    input: Input,
    /// Substitution candidates: 1, 3 or auto (overrides decoder.k).
    #[arg(long)]
    k: Option<String>,
    /// Write the reference transducer in text form (single input only).
    #[arg(long, value_name = "FILE", conflicts_with = "manifest")]
    dump_fst: Option<PathBuf>,
    /// `json` transcriptions or `tsv` lines of id and verbatim phonemes.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GreedyArgs {
    #[arg(long, value_name = "FILE", conflicts_with = "manifest", required_unless_present = "manifest")]
    posteriors: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    /// TSV whose first two columns are id and KWPO path.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Reference TSV: `id<TAB>phonemes`.
    #[arg(long = "ref", value_name = "FILE")]
    reference: PathBuf,
    /// Hypothesis TSV with the same ids.
    #[arg(long = "hyp", value_name = "FILE")]
    hypothesis: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long, value_name = "PHONEMES")]
    reference: String,
    /// Phonemes actually produced, space separated.
    #[arg(long, value_name = "PHONEMES")]
    transcribed: String,
    /// Reading duration in seconds.
    #[arg(long)]
    duration: f64,
    /// Passage word count.
    #[arg(long)]
    word_count: usize,
    /// Expert score; adds the error rate to the output.
    #[arg(long)]
    reference_score: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Transcription JSON written by `decode`.
    #[arg(long, value_name = "FILE")]
    transcription: PathBuf,
    /// Score JSON written by `score`.
    #[arg(long, value_name = "FILE")]
    score: PathBuf,
    /// Utterance id (default: the transcription's lattice id).
    #[arg(long)]
    id: Option<String>,
    /// `json` document or `text` rendering.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Base phonemes, space separated.
    #[arg(long, value_name = "PHONEMES")]
    reference: String,
    /// Edit applied in order: sub:P=PH, ins:P=PH, del:P or rep:P=N.
    #[arg(long = "edit", value_name = "EDIT")]
    edits: Vec<String>,
    /// Probability mass on the intended symbol of every frame.
    #[arg(long, default_value_t = 1.0)]
    confidence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Log-normal noise scale applied when confidence < 1.
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    #[arg(long, default_value_t = 4)]
    frames_per_phoneme: usize,
    #[arg(long, default_value_t = 1)]
    blank_frames: usize,
    #[arg(long, default_value_t = 20)]
    frame_ms: u32,
    /// Output KWPO path; the truth document goes next to it as `.truth`.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[command(flatten)]
    input: Input,
    /// Substitution candidates: 1, 3 or auto (overrides decoder.k).
    #[arg(long)]
    k: Option<String>,
    /// Passage word count (default: reference phoneme count).
    #[arg(long, conflicts_with = "manifest")]
    word_count: Option<usize>,
    /// Expert score; adds the score error rate to the report.
    #[arg(long, conflicts_with = "manifest")]
    reference_score: Option<f64>,
    /// `json` document or `text` rendering.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn config_help() -> String {
    let mut out = String::from("Configuration keys (file or --section.key VALUE):\n");
    for (key, doc) in KEYS {
        out.push_str(&format!("  --{key:<30} {doc}\n"));
    }
    out
}

/// Splits `--section.key VALUE` and `--section.key=VALUE` out of `args`.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--" {
            rest.push(arg);
            rest.extend(it.by_ref());
            break;
        }
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| CliError::Usage(format!("--{name} needs a value")))?,
        };
        overrides.push((name.to_string(), value));
    }
    Ok((rest, overrides))
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let (args, mut overrides) = split_overrides(args)?;
    let help = config_help();
    let command = Cli::command().mut_subcommands(|s| s.after_help(help.clone()));
    let matches = match command.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string().trim_end().to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let k = match &cli.command {
        Command::Decode(a) => a.k.clone(),
        Command::Assess(a) => a.k.clone(),
        _ => None,
    };
    if let Some(k) = k {
        overrides.push(("decoder.k".into(), k));
    }
    let config = config::RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Decode(a) => commands::decode(&config, a),
        Command::Greedy(a) => commands::greedy(&config, a),
        Command::Eval(a) => commands::eval(a),
        Command::Score(a) => commands::score(&config, a),
        Command::Report(a) => commands::report(&config, a),
        Command::Synth(a) => commands::synth(&config, a),
        Command::Assess(a) => commands::assess(&config, a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kfunc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
