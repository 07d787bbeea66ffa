//! Run configuration: a flat `section.key = value` file merged with
//! command-line overrides.

use std::path::{Path, PathBuf};

use kfunc_core::decoder::DecoderConfig;
use kfunc_core::phonology::{FeatureWeights, PhonemeInventory, SimilarityMatrix};
use kfunc_core::scoring::ScoringConfig;

use crate::CliError;

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("decoder.k", "substitution candidates: 1, 3 or auto"),
    ("decoder.lambda_sub", "weight of the dissimilarity term in substitution costs"),
    ("decoder.beta_sub", "constant part of substitution costs"),
    ("decoder.c_del", "deletion cost"),
    ("decoder.c_ins", "insertion cost"),
    ("decoder.c_rep", "repetition cost"),
    ("decoder.tau_conf", "mean max-posterior threshold for k = auto"),
    ("phonology.inventory", "phoneme inventory file (default: bundled ARPAbet)"),
    ("phonology.consonant_class", "similarity weight of the consonant class"),
    ("phonology.consonant_voicing", "similarity weight of voicing"),
    ("phonology.consonant_place", "similarity weight of place"),
    ("phonology.consonant_manner", "similarity weight of manner"),
    ("phonology.vowel_class", "similarity weight of the vowel class"),
    ("phonology.vowel_height", "similarity weight of height"),
    ("phonology.vowel_backness", "similarity weight of backness"),
    ("phonology.vowel_rounding", "similarity weight of rounding"),
    ("phonology.vowel_tenseness", "similarity weight of tenseness"),
    ("scoring.backend", "mock or http"),
    ("scoring.endpoint", "chat-completions URL for the http backend"),
    ("scoring.model", "model name sent to the http backend"),
    ("scoring.temperature", "sampling temperature"),
    ("scoring.runs", "completions averaged per score"),
    ("scoring.examples_path", "scored few-shot examples document"),
    ("scoring.example_count", "few-shot examples per prompt"),
];

/// Merged view of the module configurations.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub decoder: DecoderConfig,
    pub weights: FeatureWeights,
    pub inventory_path: Option<PathBuf>,
    pub scoring: ScoringConfig,
}

impl RunConfig {
    /// Defaults, then the file at `path` if any, then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut config = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("{}:{}: expected `section.key = value`", path.display(), n + 1))
                })?;
                config
                    .set(key.trim(), value.trim())
                    .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), n + 1)))?;
            }
        }
        for (key, value) in overrides {
            config.set(key, value).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value {value:?}"))
        }
        let (c, v, d, s) = (
            &mut self.weights.consonant,
            &mut self.weights.vowel,
            &mut self.decoder,
            &mut self.scoring,
        );
        match key {
            "decoder.k" => d.k = value.parse()?,
            "decoder.lambda_sub" => d.lambda_sub = num(value)?,
            "decoder.beta_sub" => d.beta_sub = num(value)?,
            "decoder.c_del" => d.c_del = num(value)?,
            "decoder.c_ins" => d.c_ins = num(value)?,
            "decoder.c_rep" => d.c_rep = num(value)?,
            "decoder.tau_conf" => d.tau_conf = num(value)?,
            "phonology.inventory" => self.inventory_path = Some(PathBuf::from(value)),
            "phonology.consonant_class" => c.class = num(value)?,
            "phonology.consonant_voicing" => c.voicing = num(value)?,
            "phonology.consonant_place" => c.place = num(value)?,
            "phonology.consonant_manner" => c.manner = num(value)?,
            "phonology.vowel_class" => v.class = num(value)?,
            "phonology.vowel_height" => v.height = num(value)?,
            "phonology.vowel_backness" => v.backness = num(value)?,
            "phonology.vowel_rounding" => v.rounding = num(value)?,
            "phonology.vowel_tenseness" => v.tenseness = num(value)?,
            "scoring.backend" => s.backend = value.parse()?,
            "scoring.endpoint" => s.endpoint = Some(value.to_string()).filter(|v| !v.is_empty()),
            "scoring.model" => s.model = value.to_string(),
            "scoring.temperature" => s.temperature = num(value)?,
            "scoring.runs" => s.runs = num(value)?,
            "scoring.examples_path" => s.examples_path = Some(value.to_string()),
            "scoring.example_count" => s.example_count = num(value)?,
            _ => return Err(format!("unknown configuration key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.decoder.validate().map_err(|e| CliError::Usage(format!("decoder: {e}")))?;
        self.weights.validate().map_err(|e| CliError::Usage(format!("phonology: {e}")))?;
        self.scoring.validate().map_err(|e| CliError::Usage(format!("scoring: {e}")))?;
        Ok(())
    }

    pub fn inventory(&self) -> Result<PhonemeInventory, CliError> {
        match &self.inventory_path {
            Some(p) => PhonemeInventory::load(p).map_err(|e| CliError::Data(format!("phonology: {e}"))),
            None => Ok(PhonemeInventory::arpabet()),
        }
    }

    pub fn similarity(&self, inventory: &PhonemeInventory) -> Result<SimilarityMatrix, CliError> {
        SimilarityMatrix::new(inventory, self.weights).map_err(|e| CliError::Data(format!("phonology: {e}")))
    }
}
