//! TOML configuration tying the pipeline's knobs together.
//!
//! Every section and every field is optional; omitted values take the
//! published defaults, so an empty file is a valid configuration and a
//! file with just `[budget]\nalpha = 30.0` overrides one number.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ModelProfile;
use crate::grpo::ToyConfig;
use crate::judge::JudgeConfig;
use crate::reward::{BudgetPolicy, RewardWeights};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("could not parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// All tunables in one place, each section falling back to its defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub budget: BudgetPolicy,
    pub weights: RewardWeights,
    pub model: ModelProfile,
    pub judge: JudgeConfig,
    pub toy: ToyConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.budget
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.toy
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
