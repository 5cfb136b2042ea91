//! Config-file layer: flags override file values, which override built-in defaults.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrcError};
use crate::model::INIT_RADIUS;
use crate::train::{Phase, TrainConfig};

pub const DEFAULT_HIDDEN_DIM: usize = 1000;
pub const DEFAULT_EMBED_DIM: usize = 1000;
pub const DEFAULT_MIN_COUNT: usize = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    /// Minimum corpus frequency for a word to enter the vocabulary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_count: Option<usize>,
    /// Half-width of the uniform weight initialization.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_interval: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub pretrain: TrainOverrides,
    #[serde(default)]
    pub finetune: TrainOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub min_count: usize,
    pub init_radius: f64,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| ScrcError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ScrcError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model_settings(&self, flags: &ModelOverrides) -> Result<ModelSettings> {
        let s = ModelSettings {
            embed_dim: flags.embed_dim.or(self.model.embed_dim).unwrap_or(DEFAULT_EMBED_DIM),
            hidden_dim: flags.hidden_dim.or(self.model.hidden_dim).unwrap_or(DEFAULT_HIDDEN_DIM),
            min_count: flags.min_count.or(self.model.min_count).unwrap_or(DEFAULT_MIN_COUNT),
            init_radius: flags.init_radius.or(self.model.init_radius).unwrap_or(INIT_RADIUS),
        };
        if s.embed_dim == 0 || s.hidden_dim == 0 || s.min_count == 0 {
            return Err(ScrcError::Config(
                "embed_dim, hidden_dim and min_count must be at least 1".into(),
            ));
        }
        if !(s.init_radius.is_finite() && s.init_radius >= 0.0) {
            return Err(ScrcError::Config(format!(
                "init_radius must be finite and non-negative, got {}",
                s.init_radius
            )));
        }
        Ok(s)
    }

    pub fn train_config(&self, phase: Phase, flags: &TrainOverrides) -> Result<TrainConfig> {
        let file = match phase {
            Phase::Pretrain => &self.pretrain,
            Phase::Finetune => &self.finetune,
        };
        let d = TrainConfig::for_phase(phase);
        let cfg = TrainConfig {
            lr: flags.lr.or(file.lr).unwrap_or(d.lr),
            momentum: flags.momentum.or(file.momentum).unwrap_or(d.momentum),
            clip_norm: flags.clip_norm.or(file.clip_norm).unwrap_or(d.clip_norm),
            steps: flags.steps.or(file.steps).unwrap_or(d.steps),
            batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            log_interval: flags.log_interval.or(file.log_interval).unwrap_or(d.log_interval),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
