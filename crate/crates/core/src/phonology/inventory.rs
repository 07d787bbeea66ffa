use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{
    Backness, Height, Manner, PhonemeClass, PhonemeFeatureVector, Place, Rounding, Tenseness,
    UnknownValue, Voicing,
};
use super::PhonologyError;

/// Label of the reserved CTC blank symbol.
pub const BLANK_LABEL: &str = "<blank>";

const DEFAULT_DOCUMENT: &str = include_str!("../../data/arpabet.inv");

/// Dense symbol id; id 0 is always the blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolId(pub u32);

impl SymbolId {
    pub const BLANK: SymbolId = SymbolId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_blank(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeEntry {
    pub id: SymbolId,
    pub label: String,
    /// `None` only for the blank.
    pub features: Option<PhonemeFeatureVector>,
}

/// Ordered symbol table with phonological features.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeInventory {
    entries: Vec<PhonemeEntry>,
    by_label: HashMap<String, SymbolId>,
}

impl PhonemeInventory {
    /// The bundled 39-phoneme ARPAbet inventory.
    pub fn arpabet() -> Self {
        Self::parse(DEFAULT_DOCUMENT).expect("bundled inventory document is valid")
    }

    pub fn default_document() -> &'static str {
        DEFAULT_DOCUMENT
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhonologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PhonologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses an inventory description document and injects the blank at id 0.
    pub fn parse(document: &str) -> Result<Self, PhonologyError> {
        let mut entries = vec![PhonemeEntry {
            id: SymbolId::BLANK,
            label: BLANK_LABEL.to_string(),
            features: None,
        }];
        let mut by_label = HashMap::new();
        by_label.insert(BLANK_LABEL.to_string(), SymbolId::BLANK);

        for (lineno, raw) in document.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let label = fields.next().expect("non-empty line has a first field");
            if label.contains('=') {
                return Err(PhonologyError::Syntax {
                    line,
                    message: format!("expected a phoneme label before features, got {label:?}"),
                });
            }
            if by_label.contains_key(label) {
                return Err(PhonologyError::DuplicateLabel {
                    line,
                    label: label.to_string(),
                });
            }
            let mut dims: Vec<(String, String)> = Vec::new();
            for field in fields {
                let (key, value) = field.split_once('=').ok_or_else(|| PhonologyError::Syntax {
                    line,
                    message: format!("expected dimension=value, got {field:?}"),
                })?;
                if dims.iter().any(|(k, _)| k == key) {
                    return Err(PhonologyError::Syntax {
                        line,
                        message: format!("dimension {key} given twice"),
                    });
                }
                dims.push((key.to_string(), value.to_string()));
            }
            let features = build_features(line, label, &dims)?;
            let id = SymbolId(entries.len() as u32);
            by_label.insert(label.to_string(), id);
            entries.push(PhonemeEntry {
                id,
                label: label.to_string(),
                features: Some(features),
            });
        }

        Ok(Self { entries, by_label })
    }

    /// Number of symbols including the blank.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() <= 1
    }

    pub fn phoneme_count(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[PhonemeEntry] {
        &self.entries
    }

    /// Non-blank phoneme ids in inventory order.
    pub fn phonemes(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.entries[1..].iter().map(|e| e.id)
    }

    pub fn id(&self, label: &str) -> Option<SymbolId> {
        self.by_label.get(label).copied()
    }

    /// Like [`Self::id`] but rejects the blank and unknown labels.
    pub fn phoneme(&self, label: &str) -> Result<SymbolId, PhonologyError> {
        match self.id(label) {
            Some(id) if !id.is_blank() => Ok(id),
            Some(_) => Err(PhonologyError::BlankPhoneme),
            None => Err(PhonologyError::UnknownPhoneme(label.to_string())),
        }
    }

    /// Parses a whitespace-separated label sequence such as `"B ER D"`.
    pub fn parse_sequence(&self, text: &str) -> Result<Vec<SymbolId>, PhonologyError> {
        text.split_whitespace().map(|l| self.phoneme(l)).collect()
    }

    pub fn label(&self, id: SymbolId) -> &str {
        &self.entries[id.index()].label
    }

    pub fn labels(&self, ids: &[SymbolId]) -> Vec<String> {
        ids.iter().map(|&id| self.label(id).to_string()).collect()
    }

    pub fn contains(&self, id: SymbolId) -> bool {
        id.index() < self.entries.len()
    }

    pub fn features(&self, id: SymbolId) -> Result<&PhonemeFeatureVector, PhonologyError> {
        match self.entries.get(id.index()) {
            None => Err(PhonologyError::UnknownPhoneme(id.to_string())),
            Some(PhonemeEntry { features: None, .. }) => Err(PhonologyError::BlankPhoneme),
            Some(PhonemeEntry {
                features: Some(f), ..
            }) => Ok(f),
        }
    }

    /// Serializes the inventory back to the document syntax.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries[1..] {
            let features = entry.features.expect("non-blank entries carry features");
            out.push_str(&entry.label);
            out.push(' ');
            out.push_str(&features.to_document_fields());
            out.push('\n');
        }
        out
    }
}

fn build_features(
    line: usize,
    label: &str,
    dims: &[(String, String)],
) -> Result<PhonemeFeatureVector, PhonologyError> {
    let lookup = |key: &str| dims.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let unknown = |e: UnknownValue| PhonologyError::UnknownFeatureValue {
        line,
        dimension: e.dimension.to_string(),
        value: e.value,
    };
    let class: PhonemeClass = lookup("class")
        .ok_or_else(|| PhonologyError::MissingDimension {
            line,
            label: label.to_string(),
            dimension: "class".to_string(),
        })?
        .parse()
        .map_err(unknown)?;

    let allowed: &[&str] = match class {
        PhonemeClass::Consonant => &["class", "voicing", "place", "manner"],
        PhonemeClass::Vowel => &["class", "height", "backness", "rounding", "tenseness"],
    };
    for (key, _) in dims {
        if !allowed.contains(&key.as_str()) {
            return Err(PhonologyError::DimensionNotApplicable {
                line,
                label: label.to_string(),
                dimension: key.clone(),
                class: class.to_string(),
            });
        }
    }
    let require = |key: &str| {
        lookup(key).ok_or_else(|| PhonologyError::MissingDimension {
            line,
            label: label.to_string(),
            dimension: key.to_string(),
        })
    };

    Ok(match class {
        PhonemeClass::Consonant => PhonemeFeatureVector::Consonant {
            voicing: require(Voicing::DIMENSION)?.parse().map_err(unknown)?,
            place: require(Place::DIMENSION)?.parse().map_err(unknown)?,
            manner: require(Manner::DIMENSION)?.parse().map_err(unknown)?,
        },
        PhonemeClass::Vowel => PhonemeFeatureVector::Vowel {
            height: require(Height::DIMENSION)?.parse().map_err(unknown)?,
            backness: require(Backness::DIMENSION)?.parse().map_err(unknown)?,
            rounding: require(Rounding::DIMENSION)?.parse().map_err(unknown)?,
            tenseness: require(Tenseness::DIMENSION)?.parse().map_err(unknown)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory_has_blank_plus_39() {
        let inv = PhonemeInventory::arpabet();
        assert_eq!(inv.len(), 40);
        assert_eq!(inv.phoneme_count(), 39);
        assert_eq!(inv.label(SymbolId::BLANK), BLANK_LABEL);
        for (i, e) in inv.entries().iter().enumerate() {
            assert_eq!(e.id.index(), i);
        }
    }

    #[test]
    fn duplicate_label_is_rejected() {
        let doc = "B class=consonant voicing=voiced place=bilabial manner=stop\n\
                   B class=consonant voicing=voiceless place=bilabial manner=stop\n";
        match PhonemeInventory::parse(doc) {
            Err(PhonologyError::DuplicateLabel { line: 2, label }) => assert_eq!(label, "B"),
            other => panic!("expected duplicate label, got {other:?}"),
        }
    }

    #[test]
    fn manner_on_vowel_is_rejected() {
        let doc = "IY class=vowel height=high backness=front rounding=unrounded tenseness=tense manner=stop";
        assert!(matches!(
            PhonemeInventory::parse(doc),
            Err(PhonologyError::DimensionNotApplicable { .. })
        ));
    }

    #[test]
    fn unknown_value_and_missing_dimension() {
        let doc = "B class=consonant voicing=voiced place=uvular manner=stop";
        assert!(matches!(
            PhonemeInventory::parse(doc),
            Err(PhonologyError::UnknownFeatureValue { .. })
        ));
        let doc = "B class=consonant voicing=voiced manner=stop";
        match PhonemeInventory::parse(doc) {
            Err(PhonologyError::MissingDimension { dimension, .. }) => assert_eq!(dimension, "place"),
            other => panic!("expected missing dimension, got {other:?}"),
        }
    }

    #[test]
    fn blank_label_is_reserved() {
        let doc = "<blank> class=vowel height=high backness=front rounding=unrounded tenseness=tense";
        assert!(matches!(
            PhonemeInventory::parse(doc),
            Err(PhonologyError::DuplicateLabel { .. })
        ));
    }

    #[test]
    fn comments_and_document_round_trip() {
        let inv = PhonemeInventory::arpabet();
        let again = PhonemeInventory::parse(&inv.to_document()).unwrap();
        assert_eq!(inv, again);
        let doc = "# header\n\nB class=consonant voicing=voiced place=bilabial manner=stop # trailing\n";
        assert_eq!(PhonemeInventory::parse(doc).unwrap().len(), 2);
    }

    #[test]
    fn sequence_parsing() {
        let inv = PhonemeInventory::arpabet();
        let seq = inv.parse_sequence("B ER D").unwrap();
        assert_eq!(inv.labels(&seq), ["B", "ER", "D"]);
        assert!(matches!(
            inv.parse_sequence("B XX"),
            Err(PhonologyError::UnknownPhoneme(_))
        ));
        assert!(matches!(
            inv.parse_sequence("<blank>"),
            Err(PhonologyError::BlankPhoneme)
        ));
    }
}
