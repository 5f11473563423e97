//! Dynamic feature: inter-antenna amplitude difference and its recurrence plot.

use presence_csi::{CsiFrame, CsiSeries, Pair};
use serde::{Deserialize, Serialize};

use crate::{FeigError, Result};

/// Receive-antenna pair `(n1, n2)` whose amplitude difference forms the feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RxPair {
    pub n1: usize,
    pub n2: usize,
}

impl RxPair {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 == n2 {
            return Err(FeigError::InvalidArgument(format!("receive antennas must differ, got {n1} twice")));
        }
        Ok(Self { n1, n2 })
    }
}

/// `| |h_{m,n1,k}| - |h_{m,n2,k}| |` for every subcarrier.
pub fn amplitude_difference(frame: &CsiFrame, tx: usize, rx: RxPair) -> Result<Vec<f64>> {
    if rx.n1 == rx.n2 {
        return Err(FeigError::InvalidArgument("n1 == n2".into()));
    }
    let a = frame.pair(Pair::new(tx, rx.n1))?;
    let b = frame.pair(Pair::new(tx, rx.n2))?;
    Ok(a.iter().zip(b).map(|(x, y)| (x.norm() - y.norm()).abs()).collect())
}

pub fn subcarrier_average(diff: &[f64]) -> Result<f64> {
    if diff.is_empty() {
        return Err(FeigError::EmptyInput("subcarrier vector"));
    }
    Ok(diff.iter().sum::<f64>() / diff.len() as f64)
}

/// Subcarrier-averaged amplitude difference of every frame of a series.
pub fn df_series(series: &CsiSeries, tx: usize, rx: RxPair) -> Result<Vec<f64>> {
    series
        .frames()
        .iter()
        .map(|f| subcarrier_average(&amplitude_difference(f, tx, rx)?))
        .collect()
}

/// The last `tau` averaged differences ending at a timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFeatureWindow {
    pub values: Vec<f64>,
    pub tx: usize,
    pub rx: RxPair,
    pub end_timestamp: u64,
}

/// Window `[t - tau + 1, t]` where `t` indexes frames of `series`.
pub fn df_window(series: &CsiSeries, tx: usize, rx: RxPair, t: usize, tau: usize) -> Result<DynamicFeatureWindow> {
    if tau == 0 {
        return Err(FeigError::InvalidArgument("window size must be positive".into()));
    }
    if t + 1 < tau || t >= series.len() {
        return Err(FeigError::InsufficientHistory { needed: tau, available: (t + 1).min(series.len()) });
    }
    let values = series.frames()[t + 1 - tau..=t]
        .iter()
        .map(|f| subcarrier_average(&amplitude_difference(f, tx, rx)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(DynamicFeatureWindow { values, tx, rx, end_timestamp: series.frames()[t].timestamp })
}

/// Recurrence threshold calibrated on empty-room data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpThreshold {
    pub gamma: f64,
    pub quantile: f64,
    pub calibration_window: usize,
}

/// Smallest element of `values` whose empirical CDF reaches `quantile`.
pub fn quantile_element(values: &mut [f64], quantile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(FeigError::EmptyInput("calibration set"));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(FeigError::InvalidArgument(format!("quantile {quantile} outside (0, 1]")));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    // First index i with (i + 1) / n >= q; integer search avoids rounding in q * n.
    let index = (0..n).find(|&i| (i + 1) as f64 >= quantile * n as f64 - 1e-9 * n as f64).unwrap_or(n - 1);
    Ok(values[index])
}

/// Builds `D_e` from every ordered pair of the last `window` samples of an
/// empty-room series and takes its `quantile` element.
pub fn calibrate_gamma(
    empty: &CsiSeries,
    tx: usize,
    rx: RxPair,
    window: usize,
    quantile: f64,
) -> Result<RpThreshold> {
    if window == 0 || empty.len() < window {
        return Err(FeigError::InsufficientHistory { needed: window.max(1), available: empty.len() });
    }
    let averages = df_series(&empty.slice(empty.len() - window, window)?, tx, rx)?;
    let mut differences = Vec::with_capacity(window * window);
    for &a in &averages {
        for &b in &averages {
            differences.push((a - b).abs());
        }
    }
    let gamma = quantile_element(&mut differences, quantile)?;
    Ok(RpThreshold { gamma, quantile, calibration_window: window })
}

/// Binary recurrence plot in the row layout of time running downwards to
/// upwards: row `i` is time `t - i`, column `j` is time `t - tau + 1 + j`.
/// Equal-time entries therefore sit on the anti-diagonal, and the matrix is
/// persymmetric. Pixel value 1 is black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecurrencePlot {
    size: usize,
    pixels: Vec<u8>,
}

impl RecurrencePlot {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major pixels, `size * size`.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.size + col]
    }

    /// Pixel for window positions `a` and `b` (0 = oldest sample).
    pub fn at_times(&self, a: usize, b: usize) -> u8 {
        self.get(self.size - 1 - a, b)
    }

    pub fn white_fraction(&self) -> f64 {
        self.pixels.iter().filter(|&&p| p == 0).count() as f64 / self.pixels.len() as f64
    }

    /// Nearest-neighbour resample to `out x out`; binary values are preserved.
    pub fn resized(&self, out: usize) -> Vec<u8> {
        let src = |d: usize| (((d as f64 + 0.5) * self.size as f64 / out as f64) as usize).min(self.size - 1);
        let mut pixels = Vec::with_capacity(out * out);
        for r in 0..out {
            for c in 0..out {
                pixels.push(self.get(src(r), src(c)));
            }
        }
        pixels
    }

    /// Greyscale render: black (0) where the pixel is set, white elsewhere.
    pub fn to_gray(&self, out: usize) -> Vec<u8> {
        self.resized(out).into_iter().map(|p| if p == 1 { 0 } else { 255 }).collect()
    }
}

pub fn recurrence_plot(window: &DynamicFeatureWindow, gamma: f64) -> Result<RecurrencePlot> {
    recurrence_plot_values(&window.values, gamma)
}

pub fn recurrence_plot_values(values: &[f64], gamma: f64) -> Result<RecurrencePlot> {
    if !(gamma >= 0.0) {
        return Err(FeigError::InvalidArgument(format!("gamma {gamma} must be non-negative")));
    }
    let size = values.len();
    if size == 0 {
        return Err(FeigError::EmptyInput("feature window"));
    }
    let mut pixels = vec![0u8; size * size];
    for row in 0..size {
        let a = values[size - 1 - row];
        for (col, &b) in values.iter().enumerate() {
            pixels[row * size + col] = u8::from((a - b).abs() <= gamma);
        }
    }
    Ok(RecurrencePlot { size, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use presence_csi::Dims;

    fn frame_with_amplitudes(a: f64, b: f64, k: usize) -> CsiFrame {
        let mut values = vec![Complex64::from_polar(a, 0.3); k];
        values.extend(vec![Complex64::from_polar(b, -1.2); k]);
        CsiFrame::new(Dims::new(1, 2, k), 0, values).unwrap()
    }

    #[test]
    fn identical_pairs_give_zero() {
        let frame = frame_with_amplitudes(2.0, 2.0, 8);
        let rx = RxPair::new(0, 1).unwrap();
        assert!(amplitude_difference(&frame, 0, rx).unwrap().iter().all(|&d| d.abs() < 1e-15));
    }

    #[test]
    fn constant_difference() {
        let frame = frame_with_amplitudes(3.0, 5.0, 8);
        let rx = RxPair::new(0, 1).unwrap();
        for d in amplitude_difference(&frame, 0, rx).unwrap() {
            assert!((d - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_equal_antennas_and_bad_index() {
        assert!(RxPair::new(1, 1).is_err());
        let frame = frame_with_amplitudes(1.0, 1.0, 2);
        assert!(amplitude_difference(&frame, 3, RxPair::new(0, 1).unwrap()).is_err());
    }

    #[test]
    fn averages() {
        assert_eq!(subcarrier_average(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(subcarrier_average(&[4.5; 7]).unwrap(), 4.5);
        assert!(subcarrier_average(&[]).is_err());
    }

    #[test]
    fn quantile_picks_first_element_reaching_cdf() {
        let mut set: Vec<f64> = (0..10).rev().map(f64::from).collect();
        assert_eq!(quantile_element(&mut set, 0.5).unwrap(), 4.0);
        assert_eq!(quantile_element(&mut set, 1.0).unwrap(), 9.0);
        assert_eq!(quantile_element(&mut set, 0.9).unwrap(), 8.0);
        assert_eq!(quantile_element(&mut set, 0.01).unwrap(), 0.0);
        assert!(quantile_element(&mut set, 0.0).is_err());
    }

    #[test]
    fn fluctuating_window_has_white_pixel() {
        let plot = recurrence_plot_values(&[0.5, 0.8, 0.5, 0.2, 0.5], 0.3).unwrap();
        // Samples 1 (0.8) and 3 (0.2) differ by 0.6 > gamma.
        assert_eq!(plot.at_times(1, 3), 0);
        assert_eq!(plot.at_times(3, 1), 0);
        assert_eq!(plot.at_times(0, 2), 1);
    }

    #[test]
    fn stable_window_has_black_pixel() {
        let plot = recurrence_plot_values(&[0.5, 0.6, 0.5, 0.4, 0.5], 0.3).unwrap();
        // 0.6 vs 0.4 differ by 0.2 <= gamma.
        assert_eq!(plot.at_times(1, 3), 1);
        assert_eq!(plot.white_fraction(), 0.0);
    }

    #[test]
    fn constant_window_is_all_black() {
        let plot = recurrence_plot_values(&[0.7; 12], 0.0).unwrap();
        assert!(plot.pixels().iter().all(|&p| p == 1));
    }

    #[test]
    fn resize_keeps_binary_values() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let plot = recurrence_plot_values(&values, 0.2).unwrap();
        let small = plot.resized(32);
        assert_eq!(small.len(), 32 * 32);
        assert!(small.iter().all(|&p| p <= 1));
        assert_eq!(plot.resized(50), plot.pixels());
    }
}
