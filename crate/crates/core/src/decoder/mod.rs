//! Reference-guided decoding of posterior lattices: the reference transducer
//! with match, substitution, deletion, insertion and repetition arcs, the
//! exact search over emission, collapse and reference, the greedy baseline
//! and adaptive choice of the substitution candidate count.

mod greedy;
mod reference;
mod search;
mod transcription;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fst::FstError;
use crate::lattice_io::LatticeError;
use crate::phonology::PhonologyError;

pub use greedy::{greedy_decode, mean_max_posterior, select_k};
pub use reference::{build_reference_fst, ReferenceMachine};
pub use search::Decoder;
pub use transcription::{DecodedToken, EditKind, EditTag, Transcription, TranscriptionMetadata};

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Fst(#[from] FstError),
    /// A property that holds by construction was observed to fail.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// Substitution candidate count: fixed, or picked per lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KSetting {
    One,
    Three,
    Auto,
}

impl KSetting {
    /// The fixed count, `None` for `Auto`.
    pub fn fixed(self) -> Option<usize> {
        match self {
            KSetting::One => Some(1),
            KSetting::Three => Some(3),
            KSetting::Auto => None,
        }
    }
}

impl fmt::Display for KSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KSetting::One => "1",
            KSetting::Three => "3",
            KSetting::Auto => "auto",
        })
    }
}

impl FromStr for KSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "1" => Ok(KSetting::One),
            "3" => Ok(KSetting::Three),
            "auto" => Ok(KSetting::Auto),
            other => Err(format!("k must be 1, 3 or auto, got {other:?}")),
        }
    }
}

impl TryFrom<String> for KSetting {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<KSetting> for String {
    fn from(k: KSetting) -> String {
        k.to_string()
    }
}

/// Decoder penalties and the candidate-count policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub k: KSetting,
    /// Scale of the dissimilarity term in the substitution cost.
    pub lambda_sub: f64,
    /// Constant part of the substitution cost.
    pub beta_sub: f64,
    pub c_del: f64,
    pub c_ins: f64,
    pub c_rep: f64,
    /// Mean max-posterior at or above which auto selection picks `k = 3`.
    pub tau_conf: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            k: KSetting::Auto,
            lambda_sub: 4.0,
            beta_sub: 0.5,
            c_del: 3.0,
            c_ins: 2.5,
            c_rep: 1.0,
            tau_conf: 0.85,
        }
    }
}

impl DecoderConfig {
    pub fn with_k(self, k: KSetting) -> Self {
        Self { k, ..self }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let costs = [
            ("lambda_sub", self.lambda_sub),
            ("beta_sub", self.beta_sub),
            ("c_del", self.c_del),
            ("c_ins", self.c_ins),
            ("c_rep", self.c_rep),
        ];
        for (name, v) in costs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DecodeError::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.tau_conf > 0.0 && self.tau_conf < 1.0) {
            return Err(DecodeError::Config(format!(
                "tau_conf must lie strictly between 0 and 1, got {}",
                self.tau_conf
            )));
        }
        Ok(())
    }

    /// `λ·(1 − sim) + β`.
    pub fn substitution_cost(&self, similarity: f64) -> f64 {
        self.lambda_sub * (1.0 - similarity) + self.beta_sub
    }
}
