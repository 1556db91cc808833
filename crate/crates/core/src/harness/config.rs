//! Experiment configuration files (TOML) and dataset presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{CsvSchema, Normalization, SyntheticSpec};
use crate::engine::TrainConfig;
use crate::error::{Error, Result};
use crate::models::ModelKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DataConfig {
    Synthetic(SyntheticSpec),
    Csv(CsvDataConfig),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDataConfig {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
    /// Fitted on the training file, applied to both.
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden width for `mlp1`.
    pub hidden: usize,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Logistic,
            hidden: 16,
            precision: Precision::F64,
        }
    }
}

/// Datasets with a tabulated validation noise multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Mnist,
    Fmnist,
    Cifar10,
    Imdb,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Mnist, Preset::Fmnist, Preset::Cifar10, Preset::Imdb];

    /// σ_v for a target ε of 1, 2, 3 or 4.
    pub fn sigma_valid(self, epsilon: f64) -> Option<f64> {
        let row = match self {
            Preset::Mnist => [1.3, 1.0, 0.9, 0.8],
            Preset::Fmnist => [1.3, 1.3, 0.8, 0.8],
            Preset::Cifar10 => [1.3, 1.3, 1.1, 1.1],
            Preset::Imdb => [1.3, 1.2, 1.0, 0.9],
        };
        [1.0, 2.0, 3.0, 4.0]
            .iter()
            .position(|&e| e == epsilon)
            .map(|i| row[i])
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Mnist => "mnist",
            Preset::Fmnist => "fmnist",
            Preset::Cifar10 => "cifar10",
            Preset::Imdb => "imdb",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown preset `{s}` (expected mnist, fmnist, cifar10 or imdb)"))
    }
}

/// A complete experiment: data source, model, training hyperparameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When set, `train.sigma_valid` is taken from the preset table for
    /// `train.target_epsilon` (which must then be 1, 2, 3 or 4).
    pub preset: Option<Preset>,
    /// Write `checkpoint.bin` every this many iterations (0: only at the end).
    pub checkpoint_every: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::TomlDe(inner) => Error::Config(vec![format!("{}: {inner}", path.display())]),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Apply the preset (if any) and return the config actually run.
    /// The result has no preset, so it reloads to the same run.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Some(preset) = out.preset.take() {
            let eps = out.train.target_epsilon.ok_or_else(|| {
                Error::Config(vec![format!("preset `{preset}` needs train.target_epsilon")])
            })?;
            out.train.sigma_valid = preset.sigma_valid(eps).ok_or_else(|| {
                Error::Config(vec![format!(
                    "preset `{preset}` tabulates target_epsilon 1, 2, 3 or 4, not {eps}"
                )])
            })?;
        }
        Ok(out)
    }

    /// Problems that do not depend on the dataset size.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let DataConfig::Synthetic(spec) = &self.data {
            out.extend(spec.problems().into_iter().map(|p| format!("data: {p}")));
        }
        if self.model.kind == ModelKind::Mlp1 && self.model.hidden == 0 {
            out.push("model: hidden must be >= 1 for mlp1".into());
        }
        out
    }
}
