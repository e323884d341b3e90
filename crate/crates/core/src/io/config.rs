//! Flat TOML run configuration. One file holds the model, training,
//! synthetic-data and statistics keys; docs/formats.md lists them.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::net::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct ModelKeys {
    order: u32,
    channels: Vec<usize>,
    #[serde(rename = "L")]
    degree: usize,
}

impl Default for ModelKeys {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            order: m.input_order,
            channels: m.channels,
            degree: m.degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct StatsKeys {
    alpha: f64,
}

impl Default for StatsKeys {
    fn default() -> Self {
        Self { alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub order: u32,
    pub channels: Vec<usize>,
    pub degree: usize,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::defaults()
    }
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    toml::Table::try_from(value)
        .map(|t| t.keys().cloned().collect())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self::from_parts(
            ModelKeys::default(),
            TrainConfig::default(),
            SynthConfig::default(),
            StatsKeys::default(),
        )
    }

    fn from_parts(m: ModelKeys, train: TrainConfig, synth: SynthConfig, s: StatsKeys) -> Self {
        Self {
            order: m.order,
            channels: m.channels,
            degree: m.degree,
            train,
            synth,
            alpha: s.alpha,
        }
    }

    /// Parses flat TOML. Unknown keys are rejected; `seed` and `order` are
    /// shared by the training and synthetic sections.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            Error::parse(path, line, e.message().to_string())
        })?;
        let known: BTreeSet<String> = keys_of(&ModelKeys::default())
            .into_iter()
            .chain(keys_of(&TrainConfig::default()))
            .chain(keys_of(&SynthConfig {
                // optional keys only serialize when set
                template_seed: Some(0),
                ..Default::default()
            }))
            .chain(keys_of(&StatsKeys::default()))
            .collect();
        if let Some(k) = table.keys().find(|k| !known.contains(*k)) {
            return Err(Error::Config(format!("{}: unknown key '{k}'", path.display())));
        }
        let section = |e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message()));
        let cfg = Self::from_parts(
            table.clone().try_into().map_err(section)?,
            table.clone().try_into().map_err(section)?,
            table.clone().try_into().map_err(section)?,
            table.try_into().map_err(section)?,
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn model_config(&self, in_channels: usize) -> ModelConfig {
        ModelConfig {
            input_order: self.order,
            in_channels,
            channels: self.channels.clone(),
            degree: self.degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(1).validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if self.synth.order != self.order {
            return Err(Error::Config("order differs between model and synthetic keys".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}
