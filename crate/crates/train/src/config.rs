use presence_nn::{AdamConfig, EncoderSpec};
use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::losses::LossConfig;
use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageEpochs {
    pub stage1: usize,
    pub stage2: usize,
    pub stage3: usize,
}

impl Default for StageEpochs {
    fn default() -> Self {
        Self { stage1: 30, stage2: 30, stage3: 10 }
    }
}

/// Encoder shape shared by both branches; input channels come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderArch {
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
}

impl Default for EncoderArch {
    fn default() -> Self {
        let spec = EncoderSpec::default();
        Self { stage_channels: spec.stage_channels, blocks_per_stage: spec.blocks_per_stage }
    }
}

impl EncoderArch {
    pub fn spec(&self, in_channels: usize) -> EncoderSpec {
        EncoderSpec {
            in_channels,
            stage_channels: self.stage_channels.clone(),
            blocks_per_stage: self.blocks_per_stage,
            ..EncoderSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Set by the caller (the run seed), not read from configuration files.
    #[serde(skip)]
    pub seed: u64,
    /// Originals per batch; each batch also carries one augmented view of each.
    pub batch_size: usize,
    pub epochs: StageEpochs,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub optimizer: AdamConfig,
    pub encoder: EncoderArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 128,
            epochs: StageEpochs::default(),
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            optimizer: AdamConfig::default(),
            encoder: EncoderArch::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.augment.validate()?;
        self.optimizer.validate()?;
        self.encoder.spec(1).validate()?;
        if self.batch_size < 8 {
            return Err(TrainError::Config("batch size must be at least 8 (two per class)".into()));
        }
        Ok(())
    }
}
