use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fst::Label;
use crate::phonology::{PhonemeInventory, SymbolId};

use super::KSetting;

/// Edit annotation kinds. The declaration order fixes the tie-break order
/// between equal-cost decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Match,
    Substitution,
    Deletion,
    Insertion,
    Repetition,
}

impl EditKind {
    pub const ALL: [EditKind; 5] = [
        EditKind::Match,
        EditKind::Substitution,
        EditKind::Deletion,
        EditKind::Insertion,
        EditKind::Repetition,
    ];

    /// One-letter code used in compact renderings.
    pub fn code(self) -> char {
        match self {
            EditKind::Match => 'M',
            EditKind::Substitution => 'S',
            EditKind::Deletion => 'D',
            EditKind::Insertion => 'I',
            EditKind::Repetition => 'R',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Match => "match",
            EditKind::Substitution => "substitution",
            EditKind::Deletion => "deletion",
            EditKind::Insertion => "insertion",
            EditKind::Repetition => "repetition",
        }
    }

    /// Whether the edit counts toward PER.
    pub fn is_error(self) -> bool {
        !matches!(self, EditKind::Match)
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output symbol of the reference transducer. `produced` is the phoneme heard
/// (absent for deletions); `expected` the reference phoneme it answers for
/// (absent for insertions; the repeated phoneme for repetitions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EditTag {
    pub kind: EditKind,
    pub produced: Option<SymbolId>,
    pub expected: Option<SymbolId>,
}

impl EditTag {
    pub fn matched(p: SymbolId) -> Self {
        Self {
            kind: EditKind::Match,
            produced: Some(p),
            expected: Some(p),
        }
    }

    pub fn substitution(produced: SymbolId, expected: SymbolId) -> Self {
        Self {
            kind: EditKind::Substitution,
            produced: Some(produced),
            expected: Some(expected),
        }
    }

    pub fn deletion(expected: SymbolId) -> Self {
        Self {
            kind: EditKind::Deletion,
            produced: None,
            expected: Some(expected),
        }
    }

    pub fn insertion(produced: SymbolId) -> Self {
        Self {
            kind: EditKind::Insertion,
            produced: Some(produced),
            expected: None,
        }
    }

    pub fn repetition(p: SymbolId) -> Self {
        Self {
            kind: EditKind::Repetition,
            produced: Some(p),
            expected: Some(p),
        }
    }

    /// Dense transducer label for an inventory of `n` symbols (blank
    /// included). Monotone in the derived ordering, never epsilon.
    pub fn label(&self, n: usize) -> Label {
        let n = n as u64;
        let kind = self.kind as u64;
        let produced = self.produced.map_or(0, |s| s.0 as u64);
        let expected = self.expected.map_or(0, |s| s.0 as u64);
        (1 + (kind * n + produced) * n + expected) as Label
    }

    pub fn from_label(label: Label, n: usize) -> Option<Self> {
        if label == 0 {
            return None;
        }
        let n = n as u64;
        let v = label as u64 - 1;
        let expected = v % n;
        let produced = (v / n) % n;
        let kind = *EditKind::ALL.get((v / n / n) as usize)?;
        let opt = |x: u64| (x != 0).then_some(SymbolId(x as u32));
        Some(Self {
            kind,
            produced: opt(produced),
            expected: opt(expected),
        })
    }

    /// Compact form such as `S:EH|ER`, `D:ER` or `I:P`.
    pub fn render(&self, inventory: &PhonemeInventory) -> String {
        let label = |s: Option<SymbolId>| s.map_or("", |s| inventory.label(s));
        match self.kind {
            EditKind::Substitution => format!("S:{}|{}", label(self.produced), label(self.expected)),
            EditKind::Deletion => format!("D:{}", label(self.expected)),
            k => format!("{}:{}", k.code(), label(self.produced)),
        }
    }
}

/// One annotated phoneme of a transcription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedToken {
    /// The phoneme heard; for deletions, the missing reference phoneme.
    pub phoneme: String,
    pub edit: EditKind,
    /// Reference phoneme the token answers for; null for insertions.
    pub expected: Option<String>,
    /// Half-open frame span; both ends are null for deletions.
    pub frame_start: Option<usize>,
    pub frame_end: Option<usize>,
    /// Arc cost of the edit plus the emission cost of the frames in its span.
    pub cost: f64,
}

impl DecodedToken {
    /// Whether the token consumed any frames.
    pub fn is_realized(&self) -> bool {
        self.edit != EditKind::Deletion
    }
}

impl fmt::Display for DecodedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.edit, &self.expected) {
            (EditKind::Substitution, Some(e)) => write!(f, "S:{}|{}", self.phoneme, e),
            (kind, _) => write!(f, "{}:{}", kind.code(), self.phoneme),
        }
    }
}

/// How the substitution candidate count was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionMetadata {
    pub k_requested: KSetting,
    /// Mean over frames of the highest symbol probability; set when the
    /// count was chosen automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_max_posterior: Option<f64>,
    /// Describes the automatic rule, which uses lattice confidence as a
    /// stand-in for properties of the speech and model not observable here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_rule: Option<String>,
}

/// Decoded, edit-annotated phoneme sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub reference: Vec<String>,
    pub tokens: Vec<DecodedToken>,
    pub total_cost: f64,
    pub k_used: usize,
    #[serde(default)]
    pub lattice_id: Option<String>,
    pub metadata: TranscriptionMetadata,
}

impl Transcription {
    pub fn with_lattice_id(mut self, id: impl Into<String>) -> Self {
        self.lattice_id = Some(id.into());
        self
    }

    /// The phonemes actually produced, deletions dropped.
    pub fn verbatim(&self) -> Vec<String> {
        self.tokens
            .iter()
            .filter(|t| t.is_realized())
            .map(|t| t.phoneme.clone())
            .collect()
    }

    /// Compact annotations such as `["M:B", "S:EH|ER", "M:D"]`.
    pub fn annotations(&self) -> Vec<String> {
        self.tokens.iter().map(ToString::to_string).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_encoding_round_trips_and_preserves_order() {
        let n = 40;
        let mut tags = Vec::new();
        for kind in EditKind::ALL {
            for p in [None, Some(SymbolId(1)), Some(SymbolId(39))] {
                for e in [None, Some(SymbolId(2)), Some(SymbolId(39))] {
                    tags.push(EditTag {
                        kind,
                        produced: p,
                        expected: e,
                    });
                }
            }
        }
        for a in &tags {
            assert_eq!(EditTag::from_label(a.label(n), n), Some(*a));
            assert_ne!(a.label(n), 0);
            for b in &tags {
                assert_eq!(a.cmp(b), a.label(n).cmp(&b.label(n)));
            }
        }
    }

    #[test]
    fn renders_compact_forms() {
        let inv = PhonemeInventory::arpabet();
        let er = inv.id("ER").unwrap();
        let eh = inv.id("EH").unwrap();
        assert_eq!(EditTag::substitution(eh, er).render(&inv), "S:EH|ER");
        assert_eq!(EditTag::deletion(er).render(&inv), "D:ER");
        assert_eq!(EditTag::repetition(er).render(&inv), "R:ER");
    }
}
