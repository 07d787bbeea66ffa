//! Few-shot scoring of transcriptions through a pluggable completion client,
//! and the relative error rate of predicted against reference scores.

mod client;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use client::{HttpClient, RuleBasedMock, ScoringClient, ScriptedClient};

const DEFAULT_EXAMPLES: &str = include_str!("../../data/scoring_examples.json");

/// Few-shot examples expected in every prompt unless configured otherwise.
pub const DEFAULT_EXAMPLE_COUNT: usize = 3;

const PROMPT_HEADER: &str = "You are an expert oral reading fluency assessor. Each item lists the reference \
phoneme sequence of the passage, the phonemes the child actually produced, the reading duration and the \
passage word count. Rate the reading on the same scale as the scored examples and reply with the score only.";

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("scoring input is missing {0}")]
    MissingField(&'static str),
    #[error("expected {expected} scored examples, got {actual}")]
    ExampleCount { expected: usize, actual: usize },
    #[error("failed to read examples {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid examples document: {0}")]
    Examples(#[from] serde_json::Error),
    #[error("reference score must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("no score records")]
    NoRecords,
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("all {runs} completions were unparseable")]
    AllRunsFailed { runs: usize, completions: Vec<String> },
    #[error("scoring client failed: {0}")]
    Transport(String),
    #[error("invalid scoring configuration: {0}")]
    Config(String),
}

/// What the scorer sees about one reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringInputs {
    pub reference: Vec<String>,
    pub transcribed: Vec<String>,
    pub duration_seconds: f64,
    pub word_count: usize,
}

impl ScoringInputs {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.reference.is_empty() {
            return Err(ScoringError::MissingField("reference"));
        }
        if !(self.duration_seconds.is_finite() && self.duration_seconds >= 0.0) {
            return Err(ScoringError::MissingField("duration_seconds"));
        }
        if self.word_count == 0 {
            return Err(ScoringError::MissingField("word_count"));
        }
        Ok(())
    }

    fn render(&self, out: &mut String) {
        writeln!(out, "reference: {}", self.reference.join(" ")).unwrap();
        writeln!(out, "transcribed: {}", self.transcribed.join(" ")).unwrap();
        writeln!(out, "duration: {:.3} s", self.duration_seconds).unwrap();
        writeln!(out, "word_count: {}", self.word_count).unwrap();
    }
}

/// A reading with its expert score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    #[serde(flatten)]
    pub inputs: ScoringInputs,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExamplesDocument {
    examples: Vec<ScoredExample>,
}

/// The bundled scored examples.
pub fn default_examples() -> Vec<ScoredExample> {
    parse_examples(DEFAULT_EXAMPLES).expect("bundled examples are valid")
}

/// Parses a `{"examples": [...]}` document.
pub fn parse_examples(text: &str) -> Result<Vec<ScoredExample>, ScoringError> {
    let doc: ExamplesDocument = serde_json::from_str(text)?;
    for e in &doc.examples {
        e.inputs.validate()?;
    }
    Ok(doc.examples)
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<ScoredExample>, ScoringError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScoringError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_examples(&text)
}

/// Instruction header, the examples in order, then the target ending in a
/// bare `score:` line.
pub fn build_prompt(
    examples: &[ScoredExample],
    target: &ScoringInputs,
    expected_examples: usize,
) -> Result<String, ScoringError> {
    if examples.len() != expected_examples {
        return Err(ScoringError::ExampleCount {
            expected: expected_examples,
            actual: examples.len(),
        });
    }
    target.validate()?;
    let mut out = String::new();
    out.push_str(PROMPT_HEADER);
    out.push_str("\n\n");
    for (i, e) in examples.iter().enumerate() {
        e.inputs.validate()?;
        writeln!(out, "Example {}", i + 1).unwrap();
        e.inputs.render(&mut out);
        writeln!(out, "score: {}\n", e.score).unwrap();
    }
    out.push_str("Target\n");
    target.render(&mut out);
    out.push_str("score:");
    Ok(out)
}

/// First unsigned decimal number after the last occurrence of "score"
/// (any case), or the first number anywhere when "score" never appears.
pub fn parse_score(completion: &str) -> Option<f64> {
    let lower = completion.to_ascii_lowercase();
    let tail = match lower.rfind("score") {
        Some(pos) => &completion[pos + "score".len()..],
        None => completion,
    };
    first_number(tail)
}

fn first_number(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    text[start..end].parse().ok()
}

/// Raw completions of one run, in request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub completions: Vec<String>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    /// Mean over the runs that produced a parseable score.
    pub predicted: f64,
    pub runs: Vec<RunRecord>,
}

/// Queries `client` `runs` times and averages the parsed scores. An
/// unparseable completion is retried once; a run failing twice is excluded.
pub fn llm_score(
    prompt: &str,
    client: &dyn ScoringClient,
    runs: usize,
    temperature: f64,
) -> Result<ScoreOutcome, ScoringError> {
    if runs == 0 {
        return Err(ScoringError::NoRuns);
    }
    let mut records = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut record = RunRecord {
            completions: Vec::new(),
            score: None,
        };
        for _attempt in 0..2 {
            let text = client.complete(prompt, temperature)?;
            let score = parse_score(&text);
            record.completions.push(text);
            if score.is_some() {
                record.score = score;
                break;
            }
        }
        records.push(record);
    }
    let scores: Vec<f64> = records.iter().filter_map(|r| r.score).collect();
    if scores.is_empty() {
        return Err(ScoringError::AllRunsFailed {
            runs,
            completions: records.into_iter().flat_map(|r| r.completions).collect(),
        });
    }
    Ok(ScoreOutcome {
        predicted: scores.iter().sum::<f64>() / scores.len() as f64,
        runs: records,
    })
}

/// `|predicted − reference| / reference`.
pub fn score_error_rate(predicted: f64, reference: f64) -> Result<f64, ScoringError> {
    if !(reference > 0.0) {
        return Err(ScoringError::NonPositiveReference(reference));
    }
    Ok((predicted - reference).abs() / reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub utterance_id: String,
    pub predicted_score: f64,
    pub reference_score: f64,
    pub error_rate: f64,
}

impl ScoreRecord {
    pub fn new(utterance_id: impl Into<String>, predicted: f64, reference: f64) -> Result<Self, ScoringError> {
        Ok(Self {
            utterance_id: utterance_id.into(),
            predicted_score: predicted,
            reference_score: reference,
            error_rate: score_error_rate(predicted, reference)?,
        })
    }
}

/// Mean error rate in percent.
pub fn mean_error_rate(records: &[ScoreRecord]) -> Result<f64, ScoringError> {
    if records.is_empty() {
        return Err(ScoringError::NoRecords);
    }
    Ok(records.iter().map(|r| r.error_rate * 100.0).sum::<f64>() / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Mock,
    Http,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "mock" => Ok(Backend::Mock),
            "http" => Ok(Backend::Http),
            other => Err(format!("backend must be mock or http, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub runs: usize,
    pub examples_path: Option<String>,
    pub example_count: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            endpoint: None,
            model: "llama-3.1-8b-instruct".into(),
            temperature: 0.1,
            runs: 5,
            examples_path: None,
            example_count: DEFAULT_EXAMPLE_COUNT,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.backend == Backend::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(ScoringError::Config("the http backend requires scoring.endpoint".into()));
        }
        if self.runs == 0 {
            return Err(ScoringError::NoRuns);
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ScoringError::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// The configured client.
    pub fn client(&self) -> Result<Box<dyn ScoringClient>, ScoringError> {
        self.validate()?;
        Ok(match self.backend {
            Backend::Mock => Box::new(RuleBasedMock),
            Backend::Http => Box::new(HttpClient::new(
                self.endpoint.clone().expect("validated"),
                self.model.clone(),
            )?),
        })
    }

    /// Examples from `examples_path`, or the bundled set.
    pub fn examples(&self) -> Result<Vec<ScoredExample>, ScoringError> {
        match &self.examples_path {
            Some(p) => load_examples(p),
            None => Ok(default_examples()),
        }
    }
}
