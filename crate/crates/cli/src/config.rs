use std::fs;
use std::path::Path;

use saloss_core::attribution::AttributionOptions;
use saloss_core::data::SyntheticSpec;
use saloss_core::model::ModelConfig;
use saloss_core::salience::TextRankConfig;
use saloss_core::training::TrainConfig;
use saloss_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with. Every section is optional and
/// missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub textrank: TextRankConfig,
    pub attribution: AttributionConfig,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub ig_steps: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            ig_steps: AttributionOptions::default().ig_steps,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}
