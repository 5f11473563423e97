use std::path::Path;

use presence_csi::Room;
use presence_feig::FeigConfig;
use presence_train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Frames per training series (windows = frames - tau + 1).
    pub train_frames: usize,
    pub test_frames: usize,
    /// Added to the run seed for the test series, which also start after
    /// the training range so both splits are disjoint in time.
    pub test_seed_offset: u64,
    pub calibration_seed_offset: u64,
    /// Featurization threads; results do not depend on it.
    pub workers: usize,
    pub room: Room,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_frames: 549,
            test_frames: 299,
            test_seed_offset: 7919,
            calibration_seed_offset: 104_729,
            workers: 1,
            room: Room::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbSpace {
    /// Unit projections (where the losses act).
    #[default]
    Projection,
    Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub db_space: DbSpace,
    /// Also write projections into the embeddings CSV.
    pub export_projections: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { db_space: DbSpace::Projection, export_projections: true }
    }
}

/// Everything one run needs; a single JSON file, unknown keys rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub features: FeigConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            data: DataConfig::default(),
            features: FeigConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let tau = self.features.tau;
        if self.data.train_frames < tau || self.data.test_frames < tau {
            return Err(CliError::Validation(format!("series need at least tau = {tau} frames")));
        }
        if self.data.workers == 0 {
            return Err(CliError::Validation("workers must be positive".into()));
        }
        Ok(())
    }

    /// Training settings with the run seed (shifted per trial).
    pub fn train_config(&self, trial: u64) -> TrainConfig {
        TrainConfig { seed: self.seed.wrapping_add(trial), ..self.train.clone() }
    }
}
