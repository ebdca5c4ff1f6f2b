//! Run configuration: a JSON document with optional sections, each falling
//! back to defaults. Section seeds left unset inherit the global seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use speakgen::corpus::{SyntheticCorpusSpec, BINARY_ATTRIBUTE, SCALAR_ATTRIBUTE};
use speakgen::gan::TrainConfig;
use speakgen::ganspace::{DEFAULT_DIRECTIONS, DEFAULT_SAMPLES};
use speakgen::probes::SweepConfig;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanspaceSection {
    pub samples: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for GanspaceSection {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            directions: DEFAULT_DIRECTIONS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub seeds: usize,
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub seed: u64,
    /// Attribute used when a probe is fitted from a corpus.
    pub binary_attribute: String,
    pub scalar_attribute: String,
    pub heldout_fraction: f64,
    /// Generated samples used to pick a direction when none is given.
    pub selection_samples: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            seeds: s.seeds,
            start: s.start,
            end: s.end,
            step: s.step,
            seed: 0,
            binary_attribute: BINARY_ATTRIBUTE.to_string(),
            scalar_attribute: SCALAR_ATTRIBUTE.to_string(),
            heldout_fraction: 0.25,
            selection_samples: 2000,
        }
    }
}

impl SweepSection {
    pub fn grid(&self) -> SweepConfig {
        SweepConfig {
            seeds: self.seeds,
            start: self.start,
            end: self.end,
            step: self.step,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub generated: usize,
    /// Fixed similarity threshold; calibrated on the corpus when absent.
    pub threshold: Option<f64>,
    pub seed: u64,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            generated: 1000,
            threshold: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: SyntheticCorpusSpec,
    pub train: TrainConfig,
    pub ganspace: GanspaceSection,
    pub sweep: SweepSection,
    pub audit: AuditSection,
}

const SEEDED_SECTIONS: [&str; 5] = ["corpus", "train", "ganspace", "sweep", "audit"];

impl RunConfig {
    /// Parses `text` and resolves seeds: `cli_seed` overrides the top-level
    /// `seed`, and every section without its own `seed` key inherits it.
    pub fn resolve(text: &str, cli_seed: Option<u64>) -> Result<Self, CliError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let mut cfg: RunConfig =
            serde_json::from_value(raw.clone()).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if let Some(s) = cli_seed {
            cfg.seed = s;
        }
        let explicit = |section: &str| raw.get(section).and_then(|s| s.get("seed")).is_some();
        for section in SEEDED_SECTIONS {
            if explicit(section) {
                continue;
            }
            match section {
                "corpus" => cfg.corpus.seed = cfg.seed,
                "train" => cfg.train.seed = cfg.seed,
                "ganspace" => cfg.ganspace.seed = cfg.seed,
                "sweep" => cfg.sweep.seed = cfg.seed,
                _ => cfg.audit.seed = cfg.seed,
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, cli_seed: Option<u64>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
            None => "{}".to_string(),
        };
        Self::resolve(&text, cli_seed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
