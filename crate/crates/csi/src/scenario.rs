//! Scenario description: per transmission pair path lists and the subcarrier grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::frame::{Case, Dims, Pair};
use crate::{CsiError, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One propagation path of a transmission pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Complex attenuation.
    pub attenuation: Complex64,
    /// Propagation length at sample 0, in metres.
    pub length_m: f64,
    /// Length change per sample; 0 for static paths.
    pub drift_m_per_sample: f64,
}

impl PathSpec {
    pub fn fixed(attenuation: Complex64, length_m: f64) -> Self {
        Self { attenuation, length_m, drift_m_per_sample: 0.0 }
    }

    pub fn length_at(&self, t: u64) -> f64 {
        self.length_m + t as f64 * self.drift_m_per_sample
    }

    pub fn is_static(&self) -> bool {
        self.drift_m_per_sample == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOffsetMode {
    None,
    /// One random phase per frame, shared by every antenna and subcarrier.
    PerFrameRandom,
}

/// Everything needed to simulate a CSI series deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub case_id: Case,
    /// Free-form variant tag, e.g. the corner a static person occupies.
    #[serde(default)]
    pub variant: String,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub subcarriers: usize,
    /// Path lists indexed by `m * rx_antennas + n`.
    pub paths: Vec<Vec<PathSpec>>,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    pub phase_offset_mode: PhaseOffsetMode,
    /// Standard deviation of the per-frame complex attenuation perturbation,
    /// relative to each path's `|A|`.
    pub jitter_sigma: f64,
    /// Standard deviation of a slow attenuation drift, relative to `|A|`,
    /// added on top of the per-frame jitter (slow environmental change).
    #[serde(default)]
    pub drift_sigma: f64,
    /// Frames between independent drift draws; values in between are
    /// interpolated with the marginal deviation kept at `drift_sigma`.
    #[serde(default = "one")]
    pub drift_period_frames: u64,
    pub seed: u64,
}

fn one() -> u64 {
    1
}

impl ScenarioConfig {
    pub fn dims(&self) -> Dims {
        Dims::new(self.tx_antennas, self.rx_antennas, self.subcarriers)
    }

    pub fn pair_paths(&self, pair: Pair) -> &[PathSpec] {
        &self.paths[pair.tx * self.rx_antennas + pair.rx]
    }

    pub fn pair_paths_mut(&mut self, pair: Pair) -> &mut Vec<PathSpec> {
        &mut self.paths[pair.tx * self.rx_antennas + pair.rx]
    }

    /// Subcarrier centre frequencies, evenly spaced across the bandwidth.
    pub fn subcarrier_frequencies(&self) -> Vec<f64> {
        let k = self.subcarriers as f64;
        let spacing = self.bandwidth_hz / k;
        (0..self.subcarriers)
            .map(|i| self.carrier_hz - self.bandwidth_hz / 2.0 + (i as f64 + 0.5) * spacing)
            .collect()
    }

    /// Wavelength `lambda_k = c / f_k` of every subcarrier.
    pub fn wavelengths(&self) -> Vec<f64> {
        self.subcarrier_frequencies().into_iter().map(|f| SPEED_OF_LIGHT / f).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.is_empty() {
            return Err(CsiError::InvalidScenario("antenna and subcarrier counts must be positive".into()));
        }
        if self.paths.len() != dims.pairs() {
            return Err(CsiError::InvalidScenario(format!(
                "expected {} path lists, got {}",
                dims.pairs(),
                self.paths.len()
            )));
        }
        for (name, value) in [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("sample_rate_hz", self.sample_rate_hz),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(CsiError::InvalidScenario(format!("{name} must be positive, got {value}")));
            }
        }
        if self.bandwidth_hz >= 2.0 * self.carrier_hz {
            return Err(CsiError::InvalidScenario("bandwidth reaches non-positive frequencies".into()));
        }
        if !self.jitter_sigma.is_finite() || self.jitter_sigma < 0.0 {
            return Err(CsiError::InvalidScenario(format!("jitter_sigma {}", self.jitter_sigma)));
        }
        if !self.drift_sigma.is_finite() || self.drift_sigma < 0.0 {
            return Err(CsiError::InvalidScenario(format!("drift_sigma {}", self.drift_sigma)));
        }
        if self.drift_period_frames == 0 {
            return Err(CsiError::InvalidScenario("drift_period_frames must be at least 1".into()));
        }
        for (pair_index, list) in self.paths.iter().enumerate() {
            for (l, path) in list.iter().enumerate() {
                let finite = path.attenuation.re.is_finite()
                    && path.attenuation.im.is_finite()
                    && path.length_m.is_finite()
                    && path.drift_m_per_sample.is_finite();
                if !finite {
                    return Err(CsiError::NonFinite(format!("path {l} of pair {pair_index}")));
                }
                if path.length_m < 0.0 {
                    return Err(CsiError::NegativeLength { pair_index, path: l, t: 0 });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}
