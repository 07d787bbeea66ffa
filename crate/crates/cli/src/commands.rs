//! Subcommand implementations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use kfunc_core::decoder::{greedy_decode, DecodeError, Decoder, Transcription};
use kfunc_core::eval::{self, CorpusResult, EvalError};
use kfunc_core::lattice_io::{read_posteriors, write_posteriors, LatticeError, PosteriorLattice};
use kfunc_core::phonology::{PhonemeInventory, PhonologyError, SimilarityMatrix, SymbolId};
use kfunc_core::report::{self, AssessmentReport, ReportError, ScoreSection};
use kfunc_core::scoring::{self, Backend, RunRecord, ScoreRecord, ScoringClient, ScoringError, ScoringInputs};
use kfunc_core::synth::{self, Edit, SynthError, SynthesisPlan, TruthDocument};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{AssessArgs, CliError, DecodeArgs, EvalArgs, Format, GreedyArgs, Input, ReportArgs, ScoreArgs, SynthArgs};

fn decode_error(e: DecodeError) -> CliError {
    match e {
        DecodeError::Config(_) => CliError::Usage(format!("decode: {e}")),
        DecodeError::Invariant(_) => CliError::Invariant(format!("decode: {e}")),
        e => CliError::Data(format!("decode: {e}")),
    }
}

fn lattice_error(path: &Path, e: LatticeError) -> CliError {
    CliError::Data(format!("lattice {}: {e}", path.display()))
}

fn phonology_error(e: PhonologyError) -> CliError {
    CliError::Data(format!("phonology: {e}"))
}

fn eval_error(e: EvalError) -> CliError {
    CliError::Data(format!("eval: {e}"))
}

fn scoring_error(e: ScoringError) -> CliError {
    match e {
        ScoringError::Config(_) | ScoringError::NoRuns => CliError::Usage(format!("scoring: {e}")),
        e => CliError::Data(format!("scoring: {e}")),
    }
}

fn report_error(e: ReportError) -> CliError {
    match e {
        ReportError::Inconsistent(_) => CliError::Invariant(format!("report: {e}")),
        e => CliError::Data(format!("report: {e}")),
    }
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::Phonology(_) | SynthError::Lattice(_) => CliError::Data(format!("synth: {e}")),
        e => CliError::Usage(format!("synth: {e}")),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

fn parse_phonemes(inventory: &PhonemeInventory, text: &str) -> Result<Vec<SymbolId>, CliError> {
    inventory.parse_sequence(text).map_err(phonology_error)
}

fn file_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// One utterance to process.
#[derive(Debug, Clone)]
struct Job {
    id: String,
    posteriors: PathBuf,
    reference: Option<String>,
    word_count: Option<usize>,
    reference_score: Option<f64>,
}

fn parse_manifest(path: &Path, need_reference: bool) -> Result<Vec<Job>, CliError> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let bad = |line: usize, msg: String| CliError::Data(format!("manifest {}:{line}: {msg}", path.display()));
    let mut jobs = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let min = if need_reference { 3 } else { 2 };
        if cols.len() < min || cols.len() > 5 {
            return Err(bad(n + 1, format!("expected {min} to 5 tab-separated columns, got {}", cols.len())));
        }
        if !seen.insert(cols[0].to_string()) {
            return Err(bad(n + 1, format!("duplicate id {:?}", cols[0])));
        }
        let opt = |i: usize| cols.get(i).copied().filter(|c| !c.is_empty());
        jobs.push(Job {
            id: cols[0].to_string(),
            posteriors: dir.join(cols[1]),
            reference: opt(2).map(str::to_string),
            word_count: opt(3)
                .map(|c| c.parse().map_err(|_| bad(n + 1, format!("bad word count {c:?}"))))
                .transpose()?,
            reference_score: opt(4)
                .map(|c| c.parse().map_err(|_| bad(n + 1, format!("bad reference score {c:?}"))))
                .transpose()?,
        });
    }
    if jobs.is_empty() {
        return Err(CliError::Data(format!("manifest {} lists no utterances", path.display())));
    }
    jobs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(jobs)
}

fn jobs_from(input: &Input) -> Result<(Vec<Job>, bool), CliError> {
    match (&input.manifest, &input.posteriors) {
        (Some(m), _) => Ok((parse_manifest(m, true)?, true)),
        (None, Some(p)) => Ok((
            vec![Job {
                id: input.id.clone().unwrap_or_else(|| file_id(p)),
                posteriors: p.clone(),
                reference: input.reference.clone(),
                word_count: None,
                reference_score: None,
            }],
            false,
        )),
        (None, None) => Err(CliError::Usage("give --posteriors with --reference, or --manifest".into())),
    }
}

/// Runs `f` over `jobs` on `threads` workers. Results keep the job order
/// and the first failure in that order is reported.
fn run_jobs<T: Send>(jobs: &[Job], threads: usize, f: impl Fn(&Job) -> Result<T, CliError> + Sync) -> Result<Vec<T>, CliError> {
    if threads == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Invariant(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T, CliError>> = pool.install(|| jobs.par_iter().map(&f).collect());
    results.into_iter().collect()
}

struct Context {
    config: RunConfig,
    inventory: PhonemeInventory,
    similarity: SimilarityMatrix,
}

impl Context {
    fn new(config: &RunConfig) -> Result<Self, CliError> {
        let inventory = config.inventory()?;
        let similarity = config.similarity(&inventory)?;
        Ok(Self {
            config: config.clone(),
            inventory,
            similarity,
        })
    }

    fn decoder(&self) -> Result<Decoder<'_>, CliError> {
        Decoder::new(&self.inventory, &self.similarity, self.config.decoder).map_err(decode_error)
    }

    fn lattice(&self, path: &Path) -> Result<PosteriorLattice, CliError> {
        read_posteriors(path, &self.inventory).map_err(|e| lattice_error(path, e))
    }

    fn reference(&self, job: &Job) -> Result<Vec<SymbolId>, CliError> {
        let text = job
            .reference
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{}: no reference given", job.id)))?;
        parse_phonemes(&self.inventory, text)
    }

    fn decode(&self, job: &Job) -> Result<(PosteriorLattice, Transcription), CliError> {
        let lattice = self.lattice(&job.posteriors)?;
        let reference = self.reference(job)?;
        let t = self.decoder()?.decode(&lattice, &reference).map_err(decode_error)?;
        Ok((lattice, t.with_lattice_id(job.id.clone())))
    }
}

pub fn decode(config: &RunConfig, args: DecodeArgs) -> Result<(), CliError> {
    let cx = Context::new(config)?;
    let (jobs, batch) = jobs_from(&args.input)?;
    let outputs = run_jobs(&jobs, args.input.jobs, |job| cx.decode(job).map(|(_, t)| t))?;
    if let Some(path) = &args.dump_fst {
        let reference = cx.reference(&jobs[0])?;
        let machine = cx.decoder()?.reference_machine(&reference, outputs[0].k_used).map_err(decode_error)?;
        write_output(Some(path), &machine.to_fst().to_text())?;
    }
    let text = match args.format {
        Format::Tsv => outputs
            .iter()
            .map(|t| format!("{}\t{}\n", t.lattice_id.as_deref().unwrap_or(""), t.verbatim().join(" ")))
            .collect(),
        Format::Json if batch => to_json(&outputs),
        Format::Json => to_json(&outputs[0]),
        Format::Text => return Err(CliError::Usage("decode writes json or tsv".into())),
    };
    write_output(args.out.as_deref(), &text)
}

pub fn greedy(config: &RunConfig, args: GreedyArgs) -> Result<(), CliError> {
    let inventory = config.inventory()?;
    let jobs = match (&args.manifest, &args.posteriors) {
        (Some(m), _) => parse_manifest(m, false)?,
        (None, Some(p)) => vec![Job {
            id: args.id.clone().unwrap_or_else(|| file_id(p)),
            posteriors: p.clone(),
            reference: None,
            word_count: None,
            reference_score: None,
        }],
        (None, None) => return Err(CliError::Usage("give --posteriors or --manifest".into())),
    };
    let decoded = run_jobs(&jobs, args.jobs, |job| {
        let lattice = read_posteriors(&job.posteriors, &inventory).map_err(|e| lattice_error(&job.posteriors, e))?;
        let symbols = greedy_decode(&lattice, &inventory).map_err(decode_error)?;
        Ok(inventory.labels(&symbols).join(" "))
    })?;
    let text: String = if args.manifest.is_some() {
        jobs.iter().zip(&decoded).map(|(j, d)| format!("{}\t{d}\n", j.id)).collect()
    } else {
        format!("{}\n", decoded[0])
    };
    write_output(args.out.as_deref(), &text)
}

pub fn eval_corpus(reference: &str, hypothesis: &str) -> Result<CorpusResult, CliError> {
    let r = eval::parse_tsv(reference).map_err(eval_error)?;
    let h = eval::parse_tsv(hypothesis).map_err(eval_error)?;
    let pairs = eval::pair_by_id(r, h).map_err(eval_error)?;
    eval::corpus_per(&pairs).map_err(eval_error)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let result = eval_corpus(&read_text(&args.reference)?, &read_text(&args.hypothesis)?)?;
    write_output(args.out.as_deref(), &to_json(&result))
}

/// Output of `score`, read back by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDocument {
    pub predicted: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
    pub runs: Vec<RunRecord>,
}

fn score_inputs(cx: &Context, client: &dyn ScoringClient, inputs: &ScoringInputs, reference_score: Option<f64>) -> Result<ScoreDocument, CliError> {
    let s = &cx.config.scoring;
    let examples = s.examples().map_err(scoring_error)?;
    let prompt = scoring::build_prompt(&examples, inputs, s.example_count).map_err(scoring_error)?;
    let outcome = scoring::llm_score(&prompt, client, s.runs, s.temperature).map_err(scoring_error)?;
    let error_rate = reference_score
        .map(|r| ScoreRecord::new("", outcome.predicted, r).map(|rec| rec.error_rate))
        .transpose()
        .map_err(scoring_error)?;
    Ok(ScoreDocument {
        predicted: outcome.predicted,
        reference: reference_score,
        error_rate,
        runs: outcome.runs,
    })
}

pub fn score(config: &RunConfig, args: ScoreArgs) -> Result<(), CliError> {
    let cx = Context::new(config)?;
    let labels = |text: &str| parse_phonemes(&cx.inventory, text).map(|s| cx.inventory.labels(&s));
    let inputs = ScoringInputs {
        reference: labels(&args.reference)?,
        transcribed: labels(&args.transcribed)?,
        duration_seconds: args.duration,
        word_count: args.word_count,
    };
    let client = config.scoring.client().map_err(scoring_error)?;
    let doc = score_inputs(&cx, client.as_ref(), &inputs, args.reference_score)?;
    write_output(args.out.as_deref(), &to_json(&doc))
}

fn advice(cx: &Context, client: &dyn ScoringClient, t: &Transcription, errors: &[eval::ErrorCount]) -> Result<String, CliError> {
    let hints = report::error_phonemes(&cx.inventory, errors)
        .iter()
        .map(|p| report::articulator_hint(&cx.inventory, p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(report_error)?;
    match cx.config.scoring.backend {
        Backend::Mock => Ok(report::template_advice(errors, &hints)),
        Backend::Http => client
            .complete(&report::feedback_prompt(t, errors, &hints), cx.config.scoring.temperature)
            .map(|a| a.trim().to_string())
            .map_err(scoring_error),
    }
}

fn build_report(cx: &Context, client: &dyn ScoringClient, id: &str, t: &Transcription, score: &ScoreDocument) -> Result<AssessmentReport, CliError> {
    let errors = eval::categorize_errors(t);
    let per = eval::per(&t.reference, &t.verbatim()).map_err(eval_error)?;
    let advice = advice(cx, client, t, &errors)?;
    let section = ScoreSection {
        predicted: score.predicted,
        reference: score.reference,
        error_rate: score.error_rate,
    };
    report::generate_report(id, t, &errors, &per, section, advice, &cx.inventory).map_err(report_error)
}

fn render_reports(reports: &[AssessmentReport], format: Format, batch: bool) -> Result<String, CliError> {
    match format {
        Format::Json if batch => Ok(to_json(&reports)),
        Format::Json => Ok(reports[0].to_json() + "\n"),
        Format::Text => Ok(reports.iter().map(AssessmentReport::render_text).collect::<Vec<_>>().join("\n")),
        Format::Tsv => Err(CliError::Usage("reports are written as json or text".into())),
    }
}

pub fn report(config: &RunConfig, args: ReportArgs) -> Result<(), CliError> {
    let cx = Context::new(config)?;
    let t: Transcription = serde_json::from_str(&read_text(&args.transcription)?)
        .map_err(|e| CliError::Data(format!("transcription {}: {e}", args.transcription.display())))?;
    let score: ScoreDocument = serde_json::from_str(&read_text(&args.score)?)
        .map_err(|e| CliError::Data(format!("score {}: {e}", args.score.display())))?;
    let id = args
        .id
        .clone()
        .or_else(|| t.lattice_id.clone())
        .unwrap_or_else(|| file_id(&args.transcription));
    let client = config.scoring.client().map_err(scoring_error)?;
    let r = build_report(&cx, client.as_ref(), &id, &t, &score)?;
    write_output(args.out.as_deref(), &render_reports(&[r], args.format, false)?)
}

pub fn synth(config: &RunConfig, args: SynthArgs) -> Result<(), CliError> {
    let cx = Context::new(config)?;
    let mut plan = SynthesisPlan::new(parse_phonemes(&cx.inventory, &args.reference)?);
    plan.edits = args
        .edits
        .iter()
        .map(|e| Edit::parse(e, &cx.inventory))
        .collect::<Result<_, _>>()
        .map_err(synth_error)?;
    plan.confidence = args.confidence;
    plan.seed = args.seed;
    plan.jitter = args.jitter;
    plan.frames_per_phoneme = args.frames_per_phoneme;
    plan.blank_frames_between = args.blank_frames;
    plan.frame_duration_ms = args.frame_ms as f32;
    let truth = synth::apply_edits(&plan, &cx.inventory).map_err(synth_error)?;
    let lattice = synth::synthesize_posteriors(&plan, &cx.inventory, &cx.similarity).map_err(synth_error)?;
    write_posteriors(&lattice, &args.out).map_err(|e| lattice_error(&args.out, e))?;
    let doc = TruthDocument::new(&plan, &truth, &cx.inventory);
    write_output(Some(&args.out.with_extension("truth")), &to_json(&doc))?;
    println!("{}", doc.realized.join(" "));
    Ok(())
}

pub fn assess(config: &RunConfig, args: AssessArgs) -> Result<(), CliError> {
    let cx = Context::new(config)?;
    let (mut jobs, batch) = jobs_from(&args.input)?;
    if !batch {
        jobs[0].word_count = args.word_count;
        jobs[0].reference_score = args.reference_score;
    }
    let client = config.scoring.client().map_err(scoring_error)?;
    let client = client.as_ref();
    let reports = run_jobs(&jobs, args.input.jobs, |job| {
        let (lattice, t) = cx.decode(job)?;
        let inputs = ScoringInputs {
            reference: t.reference.clone(),
            transcribed: t.verbatim(),
            duration_seconds: lattice.duration_seconds(),
            word_count: job.word_count.unwrap_or(t.reference.len()),
        };
        let score = score_inputs(&cx, client, &inputs, job.reference_score)?;
        build_report(&cx, client, &job.id, &t, &score)
    })?;
    write_output(args.out.as_deref(), &render_reports(&reports, args.format, batch)?)
}
