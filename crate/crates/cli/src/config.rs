//! Run configuration read from TOML, with defaults for every field.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cpd_core::sim::BankSettings;
use cpd_core::train::{AugmentConfig, TrainConfig};
use cpd_core::{AcfParams, ModelConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; data, initialization, shuffling and augmentation streams
    /// are all derived from it.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelSection,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub counts: SplitCounts,
    pub bank: BankSettings,
    pub acf: AcfParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            counts: SplitCounts::default(),
            bank: BankSettings::default(),
            acf: AcfParams::default(),
        }
    }
}

/// Recordings generated per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    pub pretrain: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            pretrain: 300,
            train: 300,
            val: 60,
            test: 100,
        }
    }
}

/// Encoder and head hyperparameters. Input dimensions come from the data
/// section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub num_layers: usize,
    pub num_heads: usize,
    pub top_k_factor: f64,
    pub decomp_kernel: usize,
    /// Defaults to twice the input width.
    pub ffn_hidden: Option<usize>,
    pub head_hidden: Vec<usize>,
    pub pe_amplitude: f64,
    pub use_decomposition: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::new(1, 1, 1);
        ModelSection {
            num_layers: base.num_layers,
            num_heads: base.num_heads,
            top_k_factor: base.top_k_factor,
            decomp_kernel: base.decomp_kernel,
            ffn_hidden: None,
            head_hidden: base.head_hidden,
            pe_amplitude: base.pe_amplitude,
            use_decomposition: base.use_decomposition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub augment: AugmentConfig,
    pub freeze_encoder: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        let base = TrainConfig::default();
        StageConfig {
            lr: base.lr,
            betas: base.betas,
            eps: base.eps,
            batch_size: base.batch_size,
            epochs: base.epochs,
            patience: base.patience,
            augment: base.augment,
            freeze_encoder: base.freeze_encoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub smoothing_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            smoothing_window: cpd_core::eval::DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved configuration as `config.toml` into `dir`.
    pub fn snapshot(&self, dir: &Path) -> Result<()> {
        cpd_core::container::write_atomic(&dir.join("config.toml"), self.to_toml()?.as_bytes())
            .with_context(|| format!("writing config snapshot into {}", dir.display()))
    }

    pub fn width(&self) -> usize {
        self.data.bank.num_links * self.data.bank.num_subcarriers_per_link
    }

    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        let m = &self.model;
        let width = self.width();
        ModelConfig {
            lags: self.data.acf.lags,
            width,
            num_layers: m.num_layers,
            num_heads: m.num_heads,
            top_k_factor: m.top_k_factor,
            decomp_kernel: m.decomp_kernel,
            ffn_hidden: m.ffn_hidden.unwrap_or(2 * width),
            head_hidden: m.head_hidden.clone(),
            num_classes,
            pe_amplitude: m.pe_amplitude,
            use_decomposition: m.use_decomposition,
        }
    }

    pub fn train_config(&self, stage: u8) -> TrainConfig {
        let s = if stage == 1 { &self.stage1 } else { &self.stage2 };
        TrainConfig {
            stage,
            lr: s.lr,
            betas: s.betas,
            eps: s.eps,
            batch_size: s.batch_size,
            epochs: s.epochs,
            patience: s.patience,
            seed: self.seed,
            augment: s.augment,
            freeze_encoder: s.freeze_encoder,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults_and_round_trips() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        let back: Config = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.model_config(3).ffn_hidden, 2 * c.width());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sede = 3").is_err());
    }
}
