//! Feature images from CSI series.
//!
//! Two per-window features feed the classifiers:
//!
//! - [`rp`]: a binary recurrence plot of the inter-antenna amplitude
//!   difference over the last `tau` frames (the dynamic feature);
//! - [`ratio`]: colorized complex-plane images of CSI ratios between
//!   transmission pairs, merged over `Q` couples (the static feature).
//!
//! [`pipeline`] calibrates both on empty-room data and turns series into
//! paired records; [`pnm`] writes the PGM/PPM renders.

pub mod pipeline;
pub mod pnm;
pub mod ratio;
pub mod rp;

pub use pipeline::{FeatureRecord, Featurizer, FeigConfig};
pub use ratio::{
    calibrate_colormap, colorize, csi_ratio, default_couples, merge_channels, position_values, rasterize_binary,
    static_feature_image, to_gray, BinaryImage, ColorCalibration, GrayImage, MergedRatioImage, RatioCouple,
    RatioVector, RgbImage,
};
pub use rp::{
    amplitude_difference, calibrate_gamma, df_window, recurrence_plot, subcarrier_average, DynamicFeatureWindow,
    RecurrencePlot, RpThreshold, RxPair,
};

use presence_csi::CsiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeigError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("degenerate ratio denominator at subcarrier {subcarrier} (|h| = {magnitude:e})")]
    DegenerateDenominator { subcarrier: usize, magnitude: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("calibration needs an empty-room (case 1) series")]
    MissingCalibration,
    #[error(transparent)]
    Csi(#[from] CsiError),
    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FeigError> = std::result::Result<T, E>;
