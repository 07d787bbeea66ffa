//! Phoneme inventory, phonological features and the shared-feature
//! similarity score used to pick substitution candidates.

mod features;
mod inventory;
mod similarity;

pub use features::{
    Backness, ConsonantWeights, FeatureWeights, Height, Manner, PhonemeClass, PhonemeFeatureVector,
    Place, Rounding, Tenseness, Voicing, VowelWeights,
};
pub use inventory::{PhonemeEntry, PhonemeInventory, SymbolId, BLANK_LABEL};
pub use similarity::SimilarityMatrix;

#[derive(Debug, thiserror::Error)]
pub enum PhonologyError {
    #[error("failed to read inventory {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate phoneme label {label:?}")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: unknown value {value:?} for dimension {dimension}")]
    UnknownFeatureValue {
        line: usize,
        dimension: String,
        value: String,
    },
    #[error("line {line}: phoneme {label} is missing required dimension {dimension}")]
    MissingDimension {
        line: usize,
        label: String,
        dimension: String,
    },
    #[error("line {line}: dimension {dimension} does not apply to {class} {label}")]
    DimensionNotApplicable {
        line: usize,
        label: String,
        dimension: String,
        class: String,
    },
    #[error("unknown phoneme {0}")]
    UnknownPhoneme(String),
    #[error("the blank symbol is not a phoneme")]
    BlankPhoneme,
    #[error("neighbor count {k} out of range 1..={max}")]
    NeighborCountOutOfRange { k: usize, max: usize },
    #[error("invalid feature weights: {0}")]
    InvalidWeights(String),
}
