use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::ScoringError;
use crate::eval;

/// A text-completion backend.
pub trait ScoringClient: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, ScoringError>;
}

/// Offline deterministic scorer. Reads the target section of a scoring
/// prompt and answers `round(word_count · clamp(1 − PER/100, 0, 1))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedMock;

impl RuleBasedMock {
    pub fn score(reference: &[String], transcribed: &[String], word_count: usize) -> Option<f64> {
        let per = eval::per(reference, transcribed).ok()?.per;
        Some((word_count as f64 * (1.0 - per / 100.0).clamp(0.0, 1.0)).round())
    }
}

impl ScoringClient for RuleBasedMock {
    fn complete(&self, prompt: &str, _temperature: f64) -> Result<String, ScoringError> {
        let unreadable = || ScoringError::Transport("mock scorer could not read the prompt target".into());
        let target = &prompt[prompt.rfind("\nTarget\n").ok_or_else(unreadable)?..];
        let field = |name: &str| {
            target
                .lines()
                .find_map(|l| l.strip_prefix(name))
                .map(str::trim)
                .ok_or_else(unreadable)
        };
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let reference = split(field("reference:")?);
        let transcribed = split(field("transcribed:")?);
        let words: usize = field("word_count:")?.parse().map_err(|_| unreadable())?;
        let score = Self::score(&reference, &transcribed, words).ok_or_else(unreadable)?;
        Ok(format!("score: {score}"))
    }
}

/// Replays canned completions in order and records the prompts it saw.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    replies: Mutex<VecDeque<Result<String, String>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedClient {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(|s| Ok(s.into())).collect()),
            prompts: Mutex::default(),
        }
    }

    /// Queues a transport failure.
    pub fn push_failure(&self, message: impl Into<String>) {
        self.replies.lock().unwrap().push_back(Err(message.into()));
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl ScoringClient for ScriptedClient {
    fn complete(&self, prompt: &str, _temperature: f64) -> Result<String, ScoringError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        match self.replies.lock().unwrap().pop_front() {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(ScoringError::Transport(e)),
            None => Err(ScoringError::Transport("scripted replies exhausted".into())),
        }
    }
}

/// Chat-completions style JSON client: posts
/// `{model, messages: [{role: "user", content}], temperature}` and reads
/// `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, ScoringError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ScoringError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            http,
        })
    }

    /// Sends `Authorization: Bearer <key>` with every request.
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }
}

impl ScoringClient for HttpClient {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, ScoringError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        let mut request = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let transport = |e: reqwest::Error| ScoringError::Transport(e.to_string());
        let response = request.send().map_err(transport)?;
        let status = response.status();
        if !status.is_success() {
            return Err(ScoringError::Transport(format!("{} returned {status}", self.endpoint)));
        }
        let value: Value = response.json().map_err(transport)?;
        let choice = &value["choices"][0];
        choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .map(str::to_string)
            .ok_or_else(|| ScoringError::Transport("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_prompt, default_examples, llm_score, ScoringInputs};
    use super::*;

    fn prompt(transcribed: &str) -> String {
        let target = ScoringInputs {
            reference: "DH AH K AE T".split(' ').map(str::to_string).collect(),
            transcribed: transcribed.split_whitespace().map(str::to_string).collect(),
            duration_seconds: 1.0,
            word_count: 10,
        };
        build_prompt(&default_examples(), &target, 3).unwrap()
    }

    #[test]
    fn mock_follows_rule() {
        assert_eq!(RuleBasedMock.complete(&prompt("DH AH K AE T"), 0.1).unwrap(), "score: 10");
        // one error in five phonemes: 10 · 0.8
        assert_eq!(RuleBasedMock.complete(&prompt("DH AH K EH T"), 0.1).unwrap(), "score: 8");
        assert_eq!(RuleBasedMock.complete(&prompt(""), 0.1).unwrap(), "score: 0");
        assert!(RuleBasedMock.complete("hello", 0.1).is_err());
    }

    #[test]
    fn scripted_mean_and_retry() {
        let c = ScriptedClient::new(["40", "41", "42", "43", "44"]);
        assert_eq!(llm_score("p", &c, 5, 0.1).unwrap().predicted, 42.0);
        let c = ScriptedClient::new(["42"; 5]);
        assert_eq!(llm_score("p", &c, 5, 0.1).unwrap().predicted, 42.0);
        // the first run is retried once and then succeeds
        let c = ScriptedClient::new(["hmm", "score: 10", "20"]);
        let out = llm_score("p", &c, 2, 0.1).unwrap();
        assert_eq!(out.predicted, 15.0);
        assert_eq!(out.runs[0].completions.len(), 2);
        // a run failing twice is dropped
        let c = ScriptedClient::new(["?", "?", "30"]);
        assert_eq!(llm_score("p", &c, 2, 0.1).unwrap().predicted, 30.0);
        let c = ScriptedClient::new(["no idea"; 10]);
        assert!(matches!(llm_score("p", &c, 5, 0.1), Err(ScoringError::AllRunsFailed { runs: 5, .. })));
        let c = ScriptedClient::default();
        c.push_failure("connection refused");
        assert!(matches!(llm_score("p", &c, 1, 0.1), Err(ScoringError::Transport(_))));
    }
}
