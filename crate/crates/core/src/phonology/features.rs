use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Parse failure for a single feature value; the caller attaches line context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownValue {
    pub dimension: &'static str,
    pub value: String,
}

macro_rules! feature_enum {
    ($(#[$meta:meta])* $name:ident, $dim:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const DIMENSION: &'static str = $dim;

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = UnknownValue;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(UnknownValue { dimension: $dim, value: s.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

feature_enum!(PhonemeClass, "class", { Consonant => "consonant", Vowel => "vowel" });
feature_enum!(Voicing, "voicing", { Voiced => "voiced", Voiceless => "voiceless" });
feature_enum!(Place, "place", {
    Bilabial => "bilabial",
    Labiodental => "labiodental",
    Dental => "dental",
    Alveolar => "alveolar",
    Postalveolar => "postalveolar",
    Palatal => "palatal",
    Velar => "velar",
    Glottal => "glottal",
});
feature_enum!(Manner, "manner", {
    Stop => "stop",
    Fricative => "fricative",
    Affricate => "affricate",
    Nasal => "nasal",
    Liquid => "liquid",
    Glide => "glide",
});
feature_enum!(Height, "height", { High => "high", Mid => "mid", Low => "low" });
feature_enum!(Backness, "backness", { Front => "front", Central => "central", Back => "back" });
feature_enum!(Rounding, "rounding", { Rounded => "rounded", Unrounded => "unrounded" });
feature_enum!(Tenseness, "tenseness", { Tense => "tense", Lax => "lax" });

/// Phonological description of one non-blank phoneme.
///
/// The class is encoded in the variant, so a consonant can never carry vowel
/// dimensions and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhonemeFeatureVector {
    Consonant {
        voicing: Voicing,
        place: Place,
        manner: Manner,
    },
    Vowel {
        height: Height,
        backness: Backness,
        rounding: Rounding,
        tenseness: Tenseness,
    },
}

impl PhonemeFeatureVector {
    pub fn class(&self) -> PhonemeClass {
        match self {
            Self::Consonant { .. } => PhonemeClass::Consonant,
            Self::Vowel { .. } => PhonemeClass::Vowel,
        }
    }

    /// Renders the vector in the inventory document syntax (without the label).
    pub fn to_document_fields(&self) -> String {
        match self {
            Self::Consonant {
                voicing,
                place,
                manner,
            } => format!("class=consonant voicing={voicing} place={place} manner={manner}"),
            Self::Vowel {
                height,
                backness,
                rounding,
                tenseness,
            } => format!(
                "class=vowel height={height} backness={backness} rounding={rounding} tenseness={tenseness}"
            ),
        }
    }
}

/// Per-dimension weights for consonant pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsonantWeights {
    pub class: f64,
    pub voicing: f64,
    pub place: f64,
    pub manner: f64,
}

/// Per-dimension weights for vowel pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VowelWeights {
    pub class: f64,
    pub height: f64,
    pub backness: f64,
    pub rounding: f64,
    pub tenseness: f64,
}

/// Weight table for the shared-feature similarity score.
///
/// Cross-class pairs share no dimension, so they have no weights of their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub consonant: ConsonantWeights,
    pub vowel: VowelWeights,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        Self {
            consonant: ConsonantWeights {
                class: 0.25,
                voicing: 0.20,
                place: 0.25,
                manner: 0.30,
            },
            vowel: VowelWeights {
                class: 0.25,
                height: 0.30,
                backness: 0.25,
                rounding: 0.10,
                tenseness: 0.10,
            },
        }
    }
}

impl ConsonantWeights {
    fn entries(&self) -> [(&'static str, f64); 4] {
        [
            ("class", self.class),
            ("voicing", self.voicing),
            ("place", self.place),
            ("manner", self.manner),
        ]
    }
}

impl VowelWeights {
    fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("class", self.class),
            ("height", self.height),
            ("backness", self.backness),
            ("rounding", self.rounding),
            ("tenseness", self.tenseness),
        ]
    }
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl FeatureWeights {
    /// Checks that every weight is a positive finite number and that each
    /// class pairing sums to one.
    pub fn validate(&self) -> Result<(), String> {
        let groups: [(&str, Vec<(&str, f64)>); 2] = [
            ("consonant", self.consonant.entries().to_vec()),
            ("vowel", self.vowel.entries().to_vec()),
        ];
        for (group, entries) in groups {
            for (dim, w) in &entries {
                if !w.is_finite() || *w <= 0.0 {
                    return Err(format!("{group} weight for {dim} must be positive, got {w}"));
                }
            }
            let sum: f64 = entries.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(format!("{group} weights must sum to 1, got {sum}"));
            }
        }
        Ok(())
    }

    /// Weighted indicator sum over shared dimensions, divided by the class
    /// total so that self-similarity is exactly 1.
    pub fn score(&self, p: &PhonemeFeatureVector, q: &PhonemeFeatureVector) -> f64 {
        use PhonemeFeatureVector::{Consonant, Vowel};
        match (p, q) {
            (
                Consonant {
                    voicing: v1,
                    place: p1,
                    manner: m1,
                },
                Consonant {
                    voicing: v2,
                    place: p2,
                    manner: m2,
                },
            ) => {
                let w = &self.consonant;
                let shared = [
                    (true, w.class),
                    (v1 == v2, w.voicing),
                    (p1 == p2, w.place),
                    (m1 == m2, w.manner),
                ];
                ratio(&shared)
            }
            (
                Vowel {
                    height: h1,
                    backness: b1,
                    rounding: r1,
                    tenseness: t1,
                },
                Vowel {
                    height: h2,
                    backness: b2,
                    rounding: r2,
                    tenseness: t2,
                },
            ) => {
                let w = &self.vowel;
                let shared = [
                    (true, w.class),
                    (h1 == h2, w.height),
                    (b1 == b2, w.backness),
                    (r1 == r2, w.rounding),
                    (t1 == t2, w.tenseness),
                ];
                ratio(&shared)
            }
            _ => 0.0,
        }
    }
}

fn ratio(shared: &[(bool, f64)]) -> f64 {
    let total: f64 = shared.iter().map(|(_, w)| w).sum();
    let hit: f64 = shared.iter().filter(|(s, _)| *s).map(|(_, w)| w).sum();
    hit / total
}
