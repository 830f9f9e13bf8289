//! Versioned model checkpoints.
//!
//! A checkpoint is a single JSON document carrying everything evaluation
//! needs: the trained gate, the normalization statistics it was trained
//! with, the full training configuration, and the expert/feature name
//! lists that pin the expected panel schema. Replaying `eval` on the
//! training data reproduces the training-time report byte for byte.

use std::path::Path;

use mpmoe_core::dataset::{ForecastPanel, NormalizationStats};
use mpmoe_core::gating::GatingModel;
use mpmoe_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CHECKPOINT_FORMAT: &str = "mpmoe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Constant tag so stray JSON files fail fast with a clear message.
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: TrainConfig,
    /// Expert columns the gate was trained over, in order. Order matters:
    /// gate outputs are positional.
    pub expert_names: Vec<String>,
    /// Feature columns the gate reads, in order.
    pub feature_names: Vec<String>,
    pub normalization: NormalizationStats,
    pub model: GatingModel,
}

impl Checkpoint {
    pub fn new(
        seed: u64,
        config: TrainConfig,
        panel: &ForecastPanel,
        normalization: NormalizationStats,
        model: GatingModel,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            config,
            expert_names: panel.expert_names().to_vec(),
            feature_names: panel.feature_names().to_vec(),
            normalization,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::runtime(format!("serializing checkpoint: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::usage(format!("checkpoint not found: {}", path.display())));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
        let ck: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(CliError::data(format!(
                "{} is not a checkpoint (format tag {:?})",
                path.display(),
                ck.format
            )));
        }
        if ck.version > CHECKPOINT_VERSION {
            return Err(CliError::data(format!(
                "checkpoint version {} is newer than the supported {}",
                ck.version, CHECKPOINT_VERSION
            )));
        }
        Ok(ck)
    }

    /// The panel a checkpoint is applied to must carry exactly the columns
    /// the gate was trained on — same names, same order.
    pub fn check_panel(&self, panel: &ForecastPanel) -> Result<(), CliError> {
        if panel.expert_names() != self.expert_names {
            return Err(CliError::data(format!(
                "expert columns differ: checkpoint has {} ({}), data has {} ({})",
                self.expert_names.len(),
                self.expert_names.join(","),
                panel.n_experts(),
                panel.expert_names().join(",")
            )));
        }
        if panel.feature_names() != self.feature_names {
            return Err(CliError::data(format!(
                "feature columns differ: checkpoint has ({}), data has ({})",
                self.feature_names.join(","),
                panel.feature_names().join(",")
            )));
        }
        Ok(())
    }
}
