//! Static feature: CSI ratios rendered as colorized complex-plane images.
//!
//! Per couple of transmission pairs the ratio vector `h_a1 / h_a2` is
//! rasterized around its own centroid and scale (shape only), each point is
//! coloured by its position value `Re + Im` against an empty-room
//! calibration (location), the RGB image is reduced to greyscale, and the
//! `Q` greyscale images are stacked into one normalized tensor.

use num_complex::Complex64;
use presence_csi::{CsiFrame, CsiSeries, Dims, Pair};
use serde::{Deserialize, Serialize};

use crate::{FeigError, Result};

/// Relative guard on ratio denominators: `|h| > DENOMINATOR_GUARD * max |h|`.
pub const DENOMINATOR_GUARD: f64 = 1e-9;

/// Hue of the lowest position value, in degrees. The highest maps to 0 (red).
pub const HUE_SPAN_DEG: f64 = 270.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatioCouple {
    pub numerator: Pair,
    pub denominator: Pair,
}

impl RatioCouple {
    pub fn new(numerator: Pair, denominator: Pair) -> Result<Self> {
        if numerator == denominator {
            return Err(FeigError::InvalidArgument(format!("couple uses {numerator:?} twice")));
        }
        Ok(Self { numerator, denominator })
    }
}

/// First `q` couples in lexicographic order over `((m1, n1), (m2, n2))`, `a1 < a2`.
pub fn default_couples(dims: Dims, q: usize) -> Result<Vec<RatioCouple>> {
    let pairs: Vec<Pair> = (0..dims.tx).flat_map(|m| (0..dims.rx).map(move |n| Pair::new(m, n))).collect();
    let mut out = Vec::new();
    for (i, &a) in pairs.iter().enumerate() {
        for &b in &pairs[i + 1..] {
            out.push(RatioCouple { numerator: a, denominator: b });
        }
    }
    if q == 0 || q > out.len() {
        return Err(FeigError::InvalidArgument(format!("Q = {q}, but only {} couples exist", out.len())));
    }
    out.truncate(q);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioVector {
    pub values: Vec<Complex64>,
    pub couple: RatioCouple,
    pub timestamp: u64,
}

/// Element-wise `h_{a1,k} / h_{a2,k}`; rejects denominators below the guard.
///
/// Quotients are rounded to `f32` precision. A phase offset shared by both
/// pairs cancels in exact arithmetic but can leave last-ulp differences in
/// `f64`; the rounding absorbs them, so offset and offset-free frames give
/// identical ratios.
pub fn csi_ratio(frame: &CsiFrame, couple: RatioCouple) -> Result<RatioVector> {
    let num = frame.pair(couple.numerator)?;
    let den = frame.pair(couple.denominator)?;
    let floor = DENOMINATOR_GUARD * frame.max_amplitude();
    let mut values = Vec::with_capacity(num.len());
    for (k, (a, b)) in num.iter().zip(den).enumerate() {
        let magnitude = b.norm();
        if !(magnitude > floor) {
            return Err(FeigError::DegenerateDenominator { subcarrier: k, magnitude });
        }
        let r = a / b;
        values.push(Complex64::new(r.re as f32 as f64, r.im as f32 as f64));
    }
    Ok(RatioVector { values, couple, timestamp: frame.timestamp })
}

/// `Re(r_k) + Im(r_k)` for every subcarrier.
pub fn position_values(ratio: &RatioVector) -> Vec<f64> {
    ratio.values.iter().map(|r| r.re + r.im).collect()
}

/// Binary complex-plane image. Pixels are row-major, `height` rows of `width`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub centroid: Complex64,
    pub scale: f64,
    /// `(row, col)` of every input point, in subcarrier order.
    pub positions: Vec<(usize, usize)>,
}

impl BinaryImage {
    pub fn set_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// Greyscale render: set pixels black on white.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self.pixels.iter().map(|&p| if p == 1 { 0 } else { 255 }).collect();
        GrayImage { width: self.width, height: self.height, max_value: 255, pixels }
    }
}

/// Maps points around their centroid so the farthest lands at 90% of the
/// half-extent; the real axis runs along columns and the imaginary axis up.
pub fn rasterize_binary(ratio: &RatioVector, width: usize, height: usize) -> Result<BinaryImage> {
    rasterize_points(&ratio.values, width, height)
}

pub fn rasterize_points(points: &[Complex64], width: usize, height: usize) -> Result<BinaryImage> {
    if points.is_empty() {
        return Err(FeigError::EmptyInput("ratio vector"));
    }
    if width == 0 || height == 0 {
        return Err(FeigError::InvalidArgument("image dimensions must be positive".into()));
    }
    let centroid = points.iter().sum::<Complex64>() / points.len() as f64;
    let radius = points.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
    let target = 0.9 * width.min(height) as f64 / 2.0;
    let scale = if radius > 0.0 { target / radius } else { 1.0 };
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;

    let mut pixels = vec![0u8; width * height];
    let mut positions = Vec::with_capacity(points.len());
    for p in points {
        let d = (p - centroid) * scale;
        let col = (cx + d.re).round().clamp(0.0, width as f64 - 1.0) as usize;
        let row = (cy - d.im).round().clamp(0.0, height as f64 - 1.0) as usize;
        pixels[row * width + col] = 1;
        positions.push((row, col));
    }
    Ok(BinaryImage { width, height, pixels, centroid, scale, positions })
}

/// Position-value range of one couple measured on empty-room data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorCalibration {
    pub p_min: f64,
    pub p_max: f64,
    pub window: usize,
    pub couple: RatioCouple,
}

/// Averages the ratio of the first `window` frames per subcarrier and takes
/// the extreme position values of that mean vector.
pub fn calibrate_colormap(empty: &CsiSeries, couple: RatioCouple, window: usize) -> Result<ColorCalibration> {
    if window == 0 || empty.len() < window {
        return Err(FeigError::InsufficientHistory { needed: window.max(1), available: empty.len() });
    }
    let k = empty.dims().subcarriers;
    let mut mean = vec![Complex64::new(0.0, 0.0); k];
    for frame in &empty.frames()[..window] {
        for (acc, r) in mean.iter_mut().zip(csi_ratio(frame, couple)?.values) {
            *acc += r;
        }
    }
    let (mut p_min, mut p_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for m in &mean {
        let p = (m.re + m.im) / window as f64;
        p_min = p_min.min(p);
        p_max = p_max.max(p);
    }
    Ok(ColorCalibration { p_min, p_max, window, couple })
}

/// Hue in degrees for a position value: 0 (red) at or above `p_max`,
/// `HUE_SPAN_DEG` (purple) at or below `p_min`, linear in between.
pub fn position_hue(p: f64, cal: &ColorCalibration) -> f64 {
    if p >= cal.p_max {
        0.0
    } else if p <= cal.p_min {
        HUE_SPAN_DEG
    } else {
        HUE_SPAN_DEG * (cal.p_max - p) / (cal.p_max - cal.p_min)
    }
}

/// HSV (S = V = 1) to RGB scaled to `[0, s]`.
pub fn hue_to_rgb(hue_deg: f64, s: u16) -> [u16; 3] {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (v * s as f64).round() as u16;
    [q(r), q(g), q(b)]
}

/// Inverse of [`hue_to_rgb`] for saturated colours; `None` for greys.
pub fn rgb_to_hue(rgb: [u16; 3]) -> Option<f64> {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    if c == 0.0 {
        return None;
    }
    let h = if max == r {
        ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        (b - r) / c + 2.0
    } else {
        (r - g) / c + 4.0
    };
    Some(h * 60.0)
}

/// Channel-planar RGB image, values in `[0, max_value]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    /// Interleaved `[r, g, b]` per pixel, row-major.
    pub pixels: Vec<[u16; 3]>,
}

impl RgbImage {
    /// Counts coloured (non-grey) pixels into `bins` equal hue bins over `[0, HUE_SPAN_DEG]`.
    pub fn hue_histogram(&self, bins: usize) -> Vec<usize> {
        let mut hist = vec![0; bins];
        for &px in &self.pixels {
            if let Some(h) = rgb_to_hue(px) {
                let h = if h > HUE_SPAN_DEG + 30.0 { 0.0 } else { h.min(HUE_SPAN_DEG) };
                let bin = ((h / HUE_SPAN_DEG) * bins as f64) as usize;
                hist[bin.min(bins - 1)] += 1;
            }
        }
        hist
    }

    pub fn count_color(&self, color: [u16; 3]) -> usize {
        self.pixels.iter().filter(|&&p| p == color).count()
    }
}

/// Colours every set pixel by the position value of the point that landed
/// there (later subcarriers win on collisions); unset pixels are white.
pub fn colorize(binary: &BinaryImage, ratio: &RatioVector, cal: &ColorCalibration, s: u16) -> Result<RgbImage> {
    if binary.positions.len() != ratio.values.len() {
        return Err(FeigError::DimensionMismatch {
            expected: binary.positions.len(),
            actual: ratio.values.len(),
        });
    }
    let mut pixels = vec![[s, s, s]; binary.width * binary.height];
    for (&(row, col), p) in binary.positions.iter().zip(position_values(ratio)) {
        pixels[row * binary.width + col] = hue_to_rgb(position_hue(p, cal), s);
    }
    Ok(RgbImage { width: binary.width, height: binary.height, max_value: s, pixels })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub pixels: Vec<u16>,
}

/// `round(0.299 R + 0.587 G + 0.114 B)` per pixel.
pub fn luminance(rgb: [u16; 3]) -> u16 {
    let [r, g, b] = rgb.map(f64::from);
    (0.299 * r + 0.587 * g + 0.114 * b).round() as u16
}

pub fn to_gray(rgb: &RgbImage) -> GrayImage {
    GrayImage {
        width: rgb.width,
        height: rgb.height,
        max_value: rgb.max_value,
        pixels: rgb.pixels.iter().map(|&p| luminance(p).min(rgb.max_value)).collect(),
    }
}

/// `Q x height x width` stack of greyscale images divided by `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedRatioImage {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl MergedRatioImage {
    pub fn channel(&self, q: usize) -> &[f32] {
        let plane = self.width * self.height;
        &self.data[q * plane..(q + 1) * plane]
    }
}

pub fn merge_channels(grays: &[GrayImage], s: u16) -> Result<MergedRatioImage> {
    let first = grays.first().ok_or(FeigError::EmptyInput("greyscale images"))?;
    if s == 0 {
        return Err(FeigError::InvalidArgument("s must be positive".into()));
    }
    let mut data = Vec::with_capacity(grays.len() * first.pixels.len());
    for g in grays {
        if g.width != first.width || g.height != first.height {
            return Err(FeigError::DimensionMismatch {
                expected: first.width * first.height,
                actual: g.width * g.height,
            });
        }
        data.extend(g.pixels.iter().map(|&v| v as f32 / s as f32));
    }
    Ok(MergedRatioImage { channels: grays.len(), width: first.width, height: first.height, data })
}

/// Intermediate images of one couple, kept for rendering.
#[derive(Debug, Clone)]
pub struct CoupleImages {
    pub ratio: RatioVector,
    pub binary: BinaryImage,
    pub rgb: RgbImage,
    pub gray: GrayImage,
}

pub fn couple_images(frame: &CsiFrame, cal: &ColorCalibration, width: usize, height: usize, s: u16) -> Result<CoupleImages> {
    let ratio = csi_ratio(frame, cal.couple)?;
    let binary = rasterize_binary(&ratio, width, height)?;
    let rgb = colorize(&binary, &ratio, cal, s)?;
    let gray = to_gray(&rgb);
    Ok(CoupleImages { ratio, binary, rgb, gray })
}

/// Ratio, rasterization, colouring and greyscale per couple, then merging.
pub fn static_feature_image(
    frame: &CsiFrame,
    couples: &[RatioCouple],
    cals: &[ColorCalibration],
    width: usize,
    height: usize,
    s: u16,
) -> Result<MergedRatioImage> {
    if couples.len() != cals.len() {
        return Err(FeigError::DimensionMismatch { expected: couples.len(), actual: cals.len() });
    }
    let mut grays = Vec::with_capacity(couples.len());
    for (&couple, cal) in couples.iter().zip(cals) {
        let cal = ColorCalibration { couple, ..*cal };
        grays.push(couple_images(frame, &cal, width, height, s)?.gray);
    }
    merge_channels(&grays, s)
}
