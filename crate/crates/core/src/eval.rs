//! Phoneme error rate: unit-cost alignment, per-utterance and pooled corpus
//! aggregation, and error histograms over annotated transcriptions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::decoder::{EditKind, Transcription};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("reference sequence is empty{}", id.as_ref().map(|i| format!(" for utterance {i}")).unwrap_or_default())]
    EmptyReference { id: Option<String> },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate utterance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("utterance ids differ: only in reference {only_in_reference:?}, only in hypothesis {only_in_hypothesis:?}")]
    IdMismatch {
        only_in_reference: Vec<String>,
        only_in_hypothesis: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditOp {
    #[serde(rename = "M")]
    Match,
    #[serde(rename = "S")]
    Substitution,
    #[serde(rename = "D")]
    Deletion,
    #[serde(rename = "I")]
    Insertion,
}

impl EditOp {
    pub fn cost(self) -> usize {
        usize::from(self != EditOp::Match)
    }
}

/// One alignment column with the indices it consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedPair {
    pub op: EditOp,
    pub reference: Option<usize>,
    pub hypothesis: Option<usize>,
}

/// Minimum unit-cost edit alignment of `hypothesis` against `reference`. The
/// backtrace runs from the end and prefers match, then substitution, then
/// deletion, then insertion among equal-cost predecessors.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<AlignedPair> {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        for j in 0..=m {
            dp[i * w + j] = match (i, j) {
                (0, _) => j,
                (_, 0) => i,
                _ => {
                    let diag = dp[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
                    diag.min(dp[(i - 1) * w + j] + 1).min(dp[i * w + j - 1] + 1)
                }
            };
        }
    }
    let mut out = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = dp[(i - 1) * w + j - 1];
            if same && diag == here {
                out.push(pair(EditOp::Match, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == here {
                out.push(pair(EditOp::Substitution, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            out.push(pair(EditOp::Deletion, Some(i - 1), None));
            i -= 1;
        } else {
            out.push(pair(EditOp::Insertion, None, Some(j - 1)));
            j -= 1;
        }
    }
    out.reverse();
    out
}

fn pair(op: EditOp, reference: Option<usize>, hypothesis: Option<usize>) -> AlignedPair {
    AlignedPair {
        op,
        reference,
        hypothesis,
    }
}

/// Unit-cost edit distance of an alignment.
pub fn alignment_cost(alignment: &[AlignedPair]) -> usize {
    alignment.iter().map(|p| p.op.cost()).sum()
}

/// Edit counts and the error rate in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerResult {
    #[serde(rename = "S")]
    pub substitutions: usize,
    #[serde(rename = "D")]
    pub deletions: usize,
    #[serde(rename = "I")]
    pub insertions: usize,
    #[serde(rename = "N")]
    pub reference_length: usize,
    pub per: f64,
}

impl PerResult {
    pub fn from_counts(substitutions: usize, deletions: usize, insertions: usize, reference_length: usize) -> Self {
        let edits = substitutions + deletions + insertions;
        Self {
            substitutions,
            deletions,
            insertions,
            reference_length,
            per: 100.0 * edits as f64 / reference_length as f64,
        }
    }

    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// PER of `hypothesis` against a non-empty `reference`.
pub fn per<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<PerResult, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference { id: None });
    }
    let (mut s, mut d, mut i) = (0, 0, 0);
    for p in align(reference, hypothesis) {
        match p.op {
            EditOp::Match => {}
            EditOp::Substitution => s += 1,
            EditOp::Deletion => d += 1,
            EditOp::Insertion => i += 1,
        }
    }
    Ok(PerResult::from_counts(s, d, i, reference.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub id: String,
    #[serde(flatten)]
    pub result: PerResult,
}

/// Per-utterance results with the pooled rate `Σ edits / Σ N` and, for
/// comparison, the unweighted mean of the utterance rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub utterances: Vec<UtteranceResult>,
    pub pooled: PerResult,
    pub macro_per: f64,
}

/// One corpus entry: utterance id, reference, hypothesis.
pub type CorpusPair<T> = (String, Vec<T>, Vec<T>);

pub fn corpus_per<T: PartialEq>(pairs: &[CorpusPair<T>]) -> Result<CorpusResult, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut utterances = Vec::with_capacity(pairs.len());
    for (id, reference, hypothesis) in pairs {
        let result = per(reference, hypothesis).map_err(|_| EvalError::EmptyReference { id: Some(id.clone()) })?;
        utterances.push(UtteranceResult { id: id.clone(), result });
    }
    let sum = |f: fn(&PerResult) -> usize| utterances.iter().map(|u| f(&u.result)).sum::<usize>();
    let pooled = PerResult::from_counts(
        sum(|r| r.substitutions),
        sum(|r| r.deletions),
        sum(|r| r.insertions),
        sum(|r| r.reference_length),
    );
    let macro_per = utterances.iter().map(|u| u.result.per).sum::<f64>() / utterances.len() as f64;
    Ok(CorpusResult {
        utterances,
        pooled,
        macro_per,
    })
}

/// One histogram bin of annotated errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCount {
    #[serde(rename = "type")]
    pub kind: EditKind,
    pub expected: Option<String>,
    pub produced: Option<String>,
    pub count: usize,
}

/// Histogram of the non-match tokens keyed by (edit type, expected,
/// produced), most frequent first with ties in lexicographic key order.
pub fn categorize_errors(t: &Transcription) -> Vec<ErrorCount> {
    let mut bins: BTreeMap<(&'static str, Option<String>, Option<String>), usize> = BTreeMap::new();
    for token in &t.tokens {
        if !token.edit.is_error() {
            continue;
        }
        let produced = token.is_realized().then(|| token.phoneme.clone());
        *bins.entry((token.edit.as_str(), token.expected.clone(), produced)).or_default() += 1;
    }
    let mut out: Vec<_> = bins.into_iter().collect();
    // stable sort keeps the key order among equal counts
    out.sort_by(|a, b| b.1.cmp(&a.1));
    out.into_iter()
        .map(|((kind, expected, produced), count)| ErrorCount {
            kind: EditKind::ALL.into_iter().find(|k| k.as_str() == kind).expect("known kind"),
            expected,
            produced,
            count,
        })
        .collect()
}

/// Parses `utterance-id TAB space-separated phonemes` lines. Blank lines
/// are skipped; an id with an empty phoneme list is allowed here.
pub fn parse_tsv(text: &str) -> Result<Vec<(String, Vec<String>)>, EvalError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, phonemes) = line.split_once('\t').ok_or_else(|| EvalError::Syntax {
            line: line_no,
            message: "expected utterance id, a tab, then phonemes".into(),
        })?;
        let id = id.trim().to_string();
        if id.is_empty() {
            return Err(EvalError::Syntax {
                line: line_no,
                message: "empty utterance id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(EvalError::DuplicateId { line: line_no, id });
        }
        out.push((id, phonemes.split_whitespace().map(str::to_string).collect()));
    }
    Ok(out)
}

/// Joins reference and hypothesis entries by id, ordered by id.
pub fn pair_by_id(
    reference: Vec<(String, Vec<String>)>,
    hypothesis: Vec<(String, Vec<String>)>,
) -> Result<Vec<CorpusPair<String>>, EvalError> {
    let mut hyp: BTreeMap<String, Vec<String>> = hypothesis.into_iter().collect();
    let refs: BTreeMap<String, Vec<String>> = reference.into_iter().collect();
    let only_in_reference: Vec<String> = refs.keys().filter(|k| !hyp.contains_key(*k)).cloned().collect();
    let only_in_hypothesis: Vec<String> = hyp.keys().filter(|k| !refs.contains_key(*k)).cloned().collect();
    if !only_in_reference.is_empty() || !only_in_hypothesis.is_empty() {
        return Err(EvalError::IdMismatch {
            only_in_reference,
            only_in_hypothesis,
        });
    }
    Ok(refs
        .into_iter()
        .map(|(id, r)| {
            let h = hyp.remove(&id).expect("ids checked");
            (id, r, h)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{DecodedToken, KSetting, TranscriptionMetadata};

    fn seq(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn ops(r: &str, h: &str) -> Vec<EditOp> {
        align(&seq(r), &seq(h)).into_iter().map(|p| p.op).collect()
    }

    #[test]
    fn alignment_examples() {
        use EditOp::*;
        assert_eq!(ops("B ER D", "B EH D"), [Match, Substitution, Match]);
        assert_eq!(ops("B ER D", "P B ER D"), [Insertion, Match, Match, Match]);
        assert_eq!(ops("", ""), []);
        assert_eq!(ops("A", ""), [Deletion]);
    }

    #[test]
    fn per_examples() {
        assert!((per(&seq("B ER D"), &seq("B EH D")).unwrap().per - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(per(&seq("B ER D"), &seq("B ER D")).unwrap().per, 0.0);
        assert_eq!(per(&seq("B"), &seq("B B B")).unwrap().per, 200.0);
        assert_eq!(per::<&str>(&[], &seq("B")), Err(EvalError::EmptyReference { id: None }));
    }

    #[test]
    fn per_is_not_symmetric() {
        let a = per(&seq("B"), &seq("B B B")).unwrap();
        let b = per(&seq("B B B"), &seq("B")).unwrap();
        assert_eq!((a.insertions, a.deletions), (2, 0));
        assert_eq!((b.insertions, b.deletions), (0, 2));
        assert_ne!(a.per, b.per);
    }

    #[test]
    fn pooled_corpus() {
        let pairs = vec![
            ("u1".to_string(), seq("B ER D"), seq("B EH D")),
            ("u2".to_string(), seq("B ER D"), seq("B ER D")),
        ];
        let c = corpus_per(&pairs).unwrap();
        assert!((c.pooled.per - 100.0 / 6.0).abs() < 1e-12);
        assert!((c.macro_per - 100.0 / 6.0).abs() < 1e-12);
        assert_eq!(corpus_per::<&str>(&[]), Err(EvalError::EmptyCorpus));
    }

    fn token(edit: EditKind, phoneme: &str, expected: Option<&str>) -> DecodedToken {
        DecodedToken {
            phoneme: phoneme.into(),
            edit,
            expected: expected.map(Into::into),
            frame_start: None,
            frame_end: None,
            cost: 0.0,
        }
    }

    #[test]
    fn histogram_ordering() {
        let t = Transcription {
            reference: vec![],
            tokens: vec![
                token(EditKind::Deletion, "R", Some("R")),
                token(EditKind::Substitution, "T", Some("S")),
                token(EditKind::Match, "AH", Some("AH")),
                token(EditKind::Substitution, "T", Some("S")),
            ],
            total_cost: 0.0,
            k_used: 1,
            lattice_id: None,
            metadata: TranscriptionMetadata {
                k_requested: KSetting::One,
                mean_max_posterior: None,
                k_rule: None,
            },
        };
        let h = categorize_errors(&t);
        assert_eq!(h.len(), 2);
        assert_eq!((h[0].kind, h[0].count), (EditKind::Substitution, 2));
        assert_eq!(h[0].produced.as_deref(), Some("T"));
        assert_eq!((h[1].kind, h[1].produced.clone()), (EditKind::Deletion, None));
    }

    #[test]
    fn tsv_parsing_and_pairing() {
        let r = parse_tsv("u2\tB ER D\n\nu1\tK AE T\n").unwrap();
        let h = parse_tsv("u1\tK AE T\nu2\tB EH D\n").unwrap();
        let pairs = pair_by_id(r.clone(), h).unwrap();
        assert_eq!(pairs[0].0, "u1");
        let missing = pair_by_id(r, parse_tsv("u1\tK\n").unwrap()).unwrap_err();
        assert_eq!(
            missing,
            EvalError::IdMismatch {
                only_in_reference: vec!["u2".into()],
                only_in_hypothesis: vec![]
            }
        );
        assert!(matches!(parse_tsv("u1 B ER"), Err(EvalError::Syntax { line: 1, .. })));
        assert!(matches!(parse_tsv("u1\tB\nu1\tC"), Err(EvalError::DuplicateId { line: 2, .. })));
    }
}
