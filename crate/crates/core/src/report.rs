//! Consolidated assessment reports: verbatim transcription, error list,
//! articulator hints, score and advice, as a structured document and as text.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecodedToken, EditKind, Transcription, TranscriptionMetadata};
use crate::eval::{self, ErrorCount, PerResult};
use crate::phonology::{
    Backness, Height, Manner, PhonemeFeatureVector, PhonemeInventory, PhonologyError, Place, Rounding, Tenseness,
    Voicing,
};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error("report inputs are inconsistent: {0}")]
    Inconsistent(String),
    #[error("invalid report document: {0}")]
    Document(#[from] serde_json::Error),
}

/// Static articulation guidance for one phoneme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticulatorHint {
    pub phoneme: String,
    pub place: String,
    pub manner: String,
    pub cue: String,
}

fn place_cue(place: Place) -> &'static str {
    match place {
        Place::Bilabial => "press both lips together",
        Place::Labiodental => "rest the upper teeth lightly on the lower lip",
        Place::Dental => "put the tongue tip just behind or between the upper front teeth",
        Place::Alveolar => "raise the tongue tip to the ridge behind the upper front teeth",
        Place::Postalveolar => "lift the front of the tongue just behind the ridge, lips slightly pushed out",
        Place::Palatal => "raise the middle of the tongue toward the hard palate",
        Place::Velar => "lift the back of the tongue against the soft palate",
        Place::Glottal => "keep the mouth relaxed and open",
    }
}

fn manner_cue(manner: Manner) -> &'static str {
    match manner {
        Manner::Stop => "close completely, then release with a small puff",
        Manner::Fricative => "leave a narrow gap and push a steady stream of air through it",
        Manner::Affricate => "close completely, then release slowly into a hiss",
        Manner::Nasal => "keep that closure and let the sound flow out through the nose",
        Manner::Liquid => "keep the tongue shaped without pressing and let the voice flow smoothly",
        Manner::Glide => "start there and move quickly into the next vowel",
    }
}

fn voicing_cue(voicing: Voicing) -> &'static str {
    match voicing {
        Voicing::Voiced => "with the voice on so the throat buzzes",
        Voicing::Voiceless => "with breath only, no voice",
    }
}

fn vowel_cue(height: Height, backness: Backness, rounding: Rounding, tenseness: Tenseness) -> String {
    let height = match height {
        Height::High => "keep the tongue high",
        Height::Mid => "hold the tongue at mid height",
        Height::Low => "drop the jaw and keep the tongue low",
    };
    let backness = match backness {
        Backness::Front => "toward the front of the mouth",
        Backness::Central => "relaxed in the middle of the mouth",
        Backness::Back => "pulled toward the back of the mouth",
    };
    let rounding = match rounding {
        Rounding::Rounded => "round the lips",
        Rounding::Unrounded => "keep the lips spread or relaxed",
    };
    let tenseness = match tenseness {
        Tenseness::Tense => "hold the vowel steady",
        Tenseness::Lax => "keep the vowel short and relaxed",
    };
    format!("{height} and {backness}; {rounding} and {tenseness}")
}

/// Hint for a non-blank phoneme, derived from its features.
pub fn articulator_hint(inventory: &PhonemeInventory, label: &str) -> Result<ArticulatorHint, ReportError> {
    let id = inventory.phoneme(label)?;
    let hint = match *inventory.features(id)? {
        PhonemeFeatureVector::Consonant {
            voicing,
            place,
            manner,
        } => ArticulatorHint {
            phoneme: label.to_string(),
            place: place.to_string(),
            manner: manner.to_string(),
            cue: format!("{}; {}, {}", place_cue(place), manner_cue(manner), voicing_cue(voicing)),
        },
        PhonemeFeatureVector::Vowel {
            height,
            backness,
            rounding,
            tenseness,
        } => ArticulatorHint {
            phoneme: label.to_string(),
            place: format!("{height} {backness}"),
            manner: format!("{rounding} {tenseness} vowel"),
            cue: vowel_cue(height, backness, rounding, tenseness),
        },
    };
    Ok(hint)
}

/// The transcription part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionSection {
    pub tokens: Vec<DecodedToken>,
    pub total_cost: f64,
    pub k_used: usize,
    pub metadata: TranscriptionMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSection {
    pub predicted: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub utterance_id: String,
    pub reference: Vec<String>,
    pub transcription: TranscriptionSection,
    pub per: PerResult,
    pub errors: Vec<ErrorCount>,
    pub hints: Vec<ArticulatorHint>,
    pub score: ScoreSection,
    pub advice: String,
}

/// Phonemes named on either side of the error histogram, in inventory order.
pub fn error_phonemes(inventory: &PhonemeInventory, errors: &[ErrorCount]) -> Vec<String> {
    let named: BTreeSet<&str> = errors
        .iter()
        .flat_map(|e| [e.expected.as_deref(), e.produced.as_deref()])
        .flatten()
        .collect();
    inventory
        .phonemes()
        .map(|id| inventory.label(id))
        .filter(|l| named.contains(l))
        .map(str::to_string)
        .collect()
}

/// Assembles a report after checking that `errors` and `per` follow from
/// `transcription`.
pub fn generate_report(
    utterance_id: &str,
    transcription: &Transcription,
    errors: &[ErrorCount],
    per: &PerResult,
    score: ScoreSection,
    advice: String,
    inventory: &PhonemeInventory,
) -> Result<AssessmentReport, ReportError> {
    let derived = eval::categorize_errors(transcription);
    if derived != errors {
        return Err(ReportError::Inconsistent(
            "error histogram does not match the transcription".into(),
        ));
    }
    let expected_per = eval::per(&transcription.reference, &transcription.verbatim())
        .map_err(|e| ReportError::Inconsistent(e.to_string()))?;
    if expected_per != *per {
        return Err(ReportError::Inconsistent("PER does not match the transcription".into()));
    }
    let hints = error_phonemes(inventory, errors)
        .iter()
        .map(|p| articulator_hint(inventory, p))
        .collect::<Result<_, _>>()?;
    Ok(AssessmentReport {
        utterance_id: utterance_id.to_string(),
        reference: transcription.reference.clone(),
        transcription: TranscriptionSection {
            tokens: transcription.tokens.clone(),
            total_cost: transcription.total_cost,
            k_used: transcription.k_used,
            metadata: transcription.metadata.clone(),
        },
        per: *per,
        errors: errors.to_vec(),
        hints,
        score,
        advice,
    })
}

impl AssessmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text rendering with one section per report part.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "Assessment report: {}", self.utterance_id).unwrap();
        writeln!(out, "\nReference: {}", self.reference.join(" ")).unwrap();
        let verbatim: Vec<&str> = self
            .transcription
            .tokens
            .iter()
            .filter(|t| t.is_realized())
            .map(|t| t.phoneme.as_str())
            .collect();
        writeln!(out, "\n1. Verbatim transcription (k = {})", self.transcription.k_used).unwrap();
        writeln!(out, "   {}", verbatim.join(" ")).unwrap();
        let tags: Vec<String> = self.transcription.tokens.iter().map(ToString::to_string).collect();
        writeln!(out, "   annotated: {}", tags.join(" ")).unwrap();
        writeln!(
            out,
            "   PER {:.2}% (S={} D={} I={} N={})",
            self.per.per, self.per.substitutions, self.per.deletions, self.per.insertions, self.per.reference_length
        )
        .unwrap();
        writeln!(out, "\n2. Errors").unwrap();
        if self.errors.is_empty() {
            writeln!(out, "   none").unwrap();
        }
        for e in &self.errors {
            writeln!(out, "   {} x{}", describe_error(e), e.count).unwrap();
        }
        writeln!(out, "\n3. Articulation hints").unwrap();
        if self.hints.is_empty() {
            writeln!(out, "   none").unwrap();
        }
        for h in &self.hints {
            writeln!(out, "   /{}/ {} {}: {}", h.phoneme, h.place, h.manner, h.cue).unwrap();
        }
        writeln!(out, "\n4. Score").unwrap();
        write!(out, "   predicted {}", self.score.predicted).unwrap();
        if let Some(r) = self.score.reference {
            write!(out, ", reference {r}").unwrap();
        }
        if let Some(e) = self.score.error_rate {
            write!(out, ", error rate {:.2}%", e * 100.0).unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "\n5. Advice\n   {}", self.advice).unwrap();
        out
    }
}

/// Human-readable description such as `substitution of /ER/ with /EH/`.
pub fn describe_error(e: &ErrorCount) -> String {
    let p = |s: &Option<String>| s.as_deref().unwrap_or("?").to_string();
    match e.kind {
        EditKind::Substitution => format!("substitution of /{}/ with /{}/", p(&e.expected), p(&e.produced)),
        EditKind::Deletion => format!("deletion of /{}/", p(&e.expected)),
        EditKind::Insertion => format!("insertion of /{}/", p(&e.produced)),
        EditKind::Repetition => format!("repetition of /{}/", p(&e.produced)),
        EditKind::Match => format!("match of /{}/", p(&e.produced)),
    }
}

/// Deterministic advice built from the three most frequent errors.
pub fn template_advice(errors: &[ErrorCount], hints: &[ArticulatorHint]) -> String {
    if errors.is_empty() {
        return "Every phoneme matched the passage. Keep practicing at this pace.".to_string();
    }
    let mut out = String::from("Focus areas:");
    for (i, e) in errors.iter().take(3).enumerate() {
        write!(out, " {}. {} ({}x)", i + 1, describe_error(e), e.count).unwrap();
        let target = match e.kind {
            EditKind::Insertion | EditKind::Repetition => None,
            _ => e.expected.as_deref(),
        };
        if let Some(h) = target.and_then(|t| hints.iter().find(|h| h.phoneme == t)) {
            write!(out, "; for /{}/ {}", h.phoneme, h.cue).unwrap();
        }
        out.push('.');
    }
    out
}

/// Prompt asking a completion backend for short corrective feedback.
pub fn feedback_prompt(transcription: &Transcription, errors: &[ErrorCount], hints: &[ArticulatorHint]) -> String {
    let mut out = String::from(
        "You are a reading tutor. Write two or three sentences of encouraging, concrete feedback for a child \
         based on the pronunciation errors below.\n\n",
    );
    writeln!(out, "reference: {}", transcription.reference.join(" ")).unwrap();
    writeln!(out, "produced: {}", transcription.verbatim().join(" ")).unwrap();
    writeln!(out, "errors:").unwrap();
    for e in errors {
        writeln!(out, "- {} x{}", describe_error(e), e.count).unwrap();
    }
    writeln!(out, "articulation notes:").unwrap();
    for h in hints {
        writeln!(out, "- /{}/: {}", h.phoneme, h.cue).unwrap();
    }
    out.push_str("feedback:");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::KSetting;

    fn token(edit: EditKind, phoneme: &str, expected: Option<&str>, span: Option<(usize, usize)>) -> DecodedToken {
        DecodedToken {
            phoneme: phoneme.into(),
            edit,
            expected: expected.map(Into::into),
            frame_start: span.map(|s| s.0),
            frame_end: span.map(|s| s.1),
            cost: 0.5,
        }
    }

    fn transcription(tokens: Vec<DecodedToken>) -> Transcription {
        Transcription {
            reference: vec!["B".into(), "ER".into(), "D".into()],
            tokens,
            total_cost: 1.5,
            k_used: 3,
            lattice_id: None,
            metadata: TranscriptionMetadata {
                k_requested: KSetting::Three,
                mean_max_posterior: None,
                k_rule: None,
            },
        }
    }

    fn report(t: &Transcription, inv: &PhonemeInventory) -> AssessmentReport {
        let errors = eval::categorize_errors(t);
        let per = eval::per(&t.reference, &t.verbatim()).unwrap();
        let score = ScoreSection {
            predicted: 1.0,
            reference: None,
            error_rate: None,
        };
        generate_report("u1", t, &errors, &per, score, "keep going".into(), inv).unwrap()
    }

    #[test]
    fn hints_follow_features() {
        let inv = PhonemeInventory::arpabet();
        let b = articulator_hint(&inv, "B").unwrap();
        assert_eq!((b.place.as_str(), b.manner.as_str()), ("bilabial", "stop"));
        assert!(b.cue.contains("lips"));
        assert!(articulator_hint(&inv, "<blank>").is_err());
        for id in inv.phonemes() {
            assert!(articulator_hint(&inv, inv.label(id)).is_ok());
        }
    }

    #[test]
    fn all_match_report_is_empty() {
        let inv = PhonemeInventory::arpabet();
        let t = transcription(vec![
            token(EditKind::Match, "B", Some("B"), Some((0, 2))),
            token(EditKind::Match, "ER", Some("ER"), Some((2, 4))),
            token(EditKind::Match, "D", Some("D"), Some((4, 6))),
        ]);
        let r = report(&t, &inv);
        assert!(r.errors.is_empty() && r.hints.is_empty());
        assert_eq!(r.advice, "keep going");
    }

    #[test]
    fn substitution_scopes_hints_and_round_trips() {
        let inv = PhonemeInventory::arpabet();
        let t = transcription(vec![
            token(EditKind::Match, "B", Some("B"), Some((0, 2))),
            token(EditKind::Substitution, "EH", Some("ER"), Some((2, 4))),
            token(EditKind::Match, "D", Some("D"), Some((4, 6))),
        ]);
        let r = report(&t, &inv);
        let hinted: BTreeSet<&str> = r.hints.iter().map(|h| h.phoneme.as_str()).collect();
        assert_eq!(hinted, BTreeSet::from(["EH", "ER"]));
        let json = r.to_json();
        assert_eq!(AssessmentReport::from_json(&json).unwrap().to_json(), json);
        assert!(r.render_text().contains("substitution of /ER/ with /EH/"));
        assert!(template_advice(&r.errors, &r.hints).contains("/ER/"));
    }

    #[test]
    fn inconsistent_inputs_rejected() {
        let inv = PhonemeInventory::arpabet();
        let t = transcription(vec![token(EditKind::Match, "B", Some("B"), Some((0, 1)))]);
        let per = eval::per(&t.reference, &t.verbatim()).unwrap();
        let bogus = vec![ErrorCount {
            kind: EditKind::Deletion,
            expected: Some("D".into()),
            produced: None,
            count: 1,
        }];
        let score = ScoreSection {
            predicted: 0.0,
            reference: None,
            error_rate: None,
        };
        assert!(matches!(
            generate_report("u", &t, &bogus, &per, score, String::new(), &inv),
            Err(ReportError::Inconsistent(_))
        ));
    }
}
