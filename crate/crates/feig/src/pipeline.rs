//! Calibration and per-window featurization of labelled series.

use presence_csi::{Case, CsiSeries};
use serde::{Deserialize, Serialize};

use crate::ratio::{
    calibrate_colormap, couple_images, default_couples, merge_channels, ColorCalibration, CoupleImages,
    MergedRatioImage, RatioCouple,
};
use crate::rp::{calibrate_gamma, df_series, recurrence_plot_values, RecurrencePlot, RpThreshold, RxPair};
use crate::{FeigError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeigConfig {
    /// RP window length.
    pub tau: usize,
    /// Empty-room samples used for the RP threshold (the last ones).
    pub tau_gamma: usize,
    /// Empty-room samples used for the colour range (the first ones).
    pub tau_c: usize,
    pub quantile: f64,
    /// Number of ratio couples, i.e. ratio-image channels.
    pub q: usize,
    pub width: usize,
    pub height: usize,
    /// Maximum pixel value of the RGB and greyscale images.
    pub s: u16,
    pub tx: usize,
    pub rx: RxPair,
}

impl Default for FeigConfig {
    fn default() -> Self {
        Self {
            tau: 50,
            tau_gamma: 1000,
            tau_c: 1000,
            quantile: 0.9,
            q: 3,
            width: 32,
            height: 32,
            s: 255,
            tx: 0,
            rx: RxPair { n1: 0, n2: 1 },
        }
    }
}

impl FeigConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FeigError::InvalidArgument(msg.to_string()));
        if self.tau == 0 || self.tau_gamma == 0 || self.tau_c == 0 {
            return bad("window lengths must be positive");
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return bad("quantile must lie in (0, 1]");
        }
        if self.q == 0 {
            return bad("q must be positive");
        }
        if self.width == 0 || self.width != self.height {
            return bad("images must be square and non-empty");
        }
        if self.s == 0 || self.s > 255 {
            return bad("s must lie in 1..=255");
        }
        if self.rx.n1 == self.rx.n2 {
            return bad("rx antennas must differ");
        }
        Ok(())
    }

    /// Empty-room frames needed to calibrate both features.
    pub fn calibration_len(&self) -> usize {
        self.tau_gamma.max(self.tau_c)
    }

    pub fn image_len(&self) -> usize {
        self.width * self.height
    }
}

/// One paired sample: the RP of the window ending at `end_timestamp` and
/// the merged ratio image of that last frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub label: Case,
    pub end_timestamp: u64,
    /// `1 x w x h`, 1.0 white and 0.0 black.
    pub rp: Vec<f32>,
    /// `Q x w x h` in `[0, 1]`.
    pub ratio: Vec<f32>,
}

/// Everything needed to render one window.
#[derive(Debug, Clone)]
pub struct RenderSet {
    pub rp: RecurrencePlot,
    pub couples: Vec<CoupleImages>,
    pub merged: MergedRatioImage,
}

/// Calibrated featurizer; immutable once built and shareable across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeigConfig,
    pub threshold: RpThreshold,
    pub couples: Vec<RatioCouple>,
    pub calibrations: Vec<ColorCalibration>,
}

impl Featurizer {
    /// Calibrates on an empty-room series: the colour range over its first
    /// `tau_c` frames and the RP threshold over its last `tau_gamma` frames.
    pub fn calibrate(config: FeigConfig, empty: &CsiSeries) -> Result<Self> {
        config.validate()?;
        if empty.label != Some(Case::Empty) {
            return Err(FeigError::MissingCalibration);
        }
        let threshold = calibrate_gamma(empty, config.tx, config.rx, config.tau_gamma, config.quantile)?;
        let couples = default_couples(empty.dims(), config.q)?;
        let calibrations = couples
            .iter()
            .map(|&c| calibrate_colormap(empty, c, config.tau_c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, threshold, couples, calibrations })
    }

    fn rp_from_averages(&self, averages: &[f64], t: usize) -> Result<RecurrencePlot> {
        let tau = self.config.tau;
        recurrence_plot_values(&averages[t + 1 - tau..=t], self.threshold.gamma)
    }

    fn rp_tensor(&self, plot: &RecurrencePlot) -> Vec<f32> {
        plot.resized(self.config.width).into_iter().map(|p| if p == 1 { 0.0 } else { 1.0 }).collect()
    }

    fn merged(&self, couples: &[CoupleImages]) -> Result<MergedRatioImage> {
        let grays: Vec<_> = couples.iter().map(|c| c.gray.clone()).collect();
        merge_channels(&grays, self.config.s)
    }

    fn couple_images(&self, series: &CsiSeries, t: usize) -> Result<Vec<CoupleImages>> {
        let c = &self.config;
        self.calibrations
            .iter()
            .map(|cal| couple_images(&series.frames()[t], cal, c.width, c.height, c.s))
            .collect()
    }

    fn check_window(&self, series: &CsiSeries, t: usize) -> Result<()> {
        if t + 1 < self.config.tau || t >= series.len() {
            return Err(FeigError::InsufficientHistory { needed: self.config.tau, available: (t + 1).min(series.len()) });
        }
        Ok(())
    }

    /// Number of full windows in a series of `len` frames.
    pub fn window_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.config.tau)
    }

    /// Intermediate images of the window ending at frame index `t`.
    pub fn render(&self, series: &CsiSeries, t: usize) -> Result<RenderSet> {
        self.check_window(series, t)?;
        let start = t + 1 - self.config.tau;
        let window = series.slice(start, self.config.tau)?;
        let averages = df_series(&window, self.config.tx, self.config.rx)?;
        let rp = self.rp_from_averages(&averages, self.config.tau - 1)?;
        let couples = self.couple_images(series, t)?;
        let merged = self.merged(&couples)?;
        Ok(RenderSet { rp, couples, merged })
    }

    /// Record for the window ending at frame index `t`.
    pub fn record(&self, series: &CsiSeries, t: usize) -> Result<FeatureRecord> {
        let label = series.label.ok_or_else(|| FeigError::InvalidArgument("series has no label".into()))?;
        let set = self.render(series, t)?;
        Ok(FeatureRecord {
            label,
            end_timestamp: series.frames()[t].timestamp,
            rp: self.rp_tensor(&set.rp),
            ratio: set.merged.data,
        })
    }

    /// Records for every full window of a labelled series, in time order.
    /// Windows are split across `workers` threads; the output does not
    /// depend on the worker count.
    pub fn records(&self, series: &CsiSeries, workers: usize) -> Result<Vec<FeatureRecord>> {
        let label = series.label.ok_or_else(|| FeigError::InvalidArgument("series has no label".into()))?;
        let count = self.window_count(series.len());
        if count == 0 {
            return Err(FeigError::InsufficientHistory { needed: self.config.tau, available: series.len() });
        }
        let averages = df_series(series, self.config.tx, self.config.rx)?;
        let first = self.config.tau - 1;
        let build = |t: usize| -> Result<FeatureRecord> {
            let plot = self.rp_from_averages(&averages, t)?;
            let merged = self.merged(&self.couple_images(series, t)?)?;
            Ok(FeatureRecord {
                label,
                end_timestamp: series.frames()[t].timestamp,
                rp: self.rp_tensor(&plot),
                ratio: merged.data,
            })
        };

        let workers = workers.clamp(1, count);
        let chunk = count.div_ceil(workers);
        let parts: Vec<Result<Vec<FeatureRecord>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let build = &build;
                    scope.spawn(move || {
                        let lo = first + w * chunk;
                        let hi = (lo + chunk).min(first + count);
                        (lo..hi).map(build).collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("featurization worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(count);
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }
}
