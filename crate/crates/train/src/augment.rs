//! Random resized crop plus horizontal flip, identical across channels.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Range of the crop area as a fraction of the image area.
    pub crop_scale: (f64, f64),
    pub flip_prob: f64,
    /// Range of the crop aspect ratio (width / height), sampled log-uniformly.
    pub aspect_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { crop_scale: (0.2, 1.0), flip_prob: 0.5, aspect_range: (0.75, 4.0 / 3.0) }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(TrainError::Config(format!("crop scale must satisfy 0 < lo <= hi <= 1, got {:?}", self.crop_scale)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(TrainError::Config("flip probability must lie in [0, 1]".into()));
        }
        let (a, b) = self.aspect_range;
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(TrainError::Config(format!("invalid aspect range {:?}", self.aspect_range)));
        }
        Ok(())
    }
}

/// Crop rectangle in pixels: `(x0, y0, width, height)`.
pub type CropBox = (usize, usize, usize, usize);

/// Samples a crop of the `w x h` image; after ten rejected draws the whole
/// image is used.
pub fn sample_crop(w: usize, h: usize, config: &AugmentConfig, rng: &mut ChaCha8Rng) -> CropBox {
    let area = (w * h) as f64;
    let (log_a, log_b) = (config.aspect_range.0.ln(), config.aspect_range.1.ln());
    for _ in 0..10 {
        let target = area * rng.random_range(config.crop_scale.0..=config.crop_scale.1);
        let aspect = if log_a == log_b { log_a.exp() } else { rng.random_range(log_a..log_b).exp() };
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if (1..=w).contains(&cw) && (1..=h).contains(&ch) {
            let x0 = rng.random_range(0..=w - cw);
            let y0 = rng.random_range(0..=h - ch);
            return (x0, y0, cw, ch);
        }
    }
    (0, 0, w, h)
}

/// Bilinear resize of a crop of every channel back to `w x h`
/// (pixel-centre alignment, edge clamping); optionally mirrored.
pub fn resize_crop(image: &[f32], channels: usize, w: usize, h: usize, crop: CropBox, flip: bool) -> Vec<f32> {
    let (x0, y0, cw, ch) = crop;
    let plane = w * h;
    let mut out = vec![0.0; channels * plane];
    let sx = cw as f64 / w as f64;
    let sy = ch as f64 / h as f64;
    let coord = |o: usize, scale: f64, origin: usize, extent: usize| -> (usize, usize, f32) {
        let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (extent - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(extent - 1);
        (origin + lo, origin + hi, (src - lo as f64) as f32)
    };
    for oy in 0..h {
        let (ya, yb, fy) = coord(oy, sy, y0, ch);
        for ox in 0..w {
            let (xa, xb, fx) = coord(ox, sx, x0, cw);
            let dst_x = if flip { w - 1 - ox } else { ox };
            for c in 0..channels {
                let img = &image[c * plane..(c + 1) * plane];
                let top = img[ya * w + xa] * (1.0 - fx) + img[ya * w + xb] * fx;
                let bottom = img[yb * w + xa] * (1.0 - fx) + img[yb * w + xb] * fx;
                out[c * plane + oy * w + dst_x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// One augmented view of a `channels x h x w` image.
pub fn augment(image: &[f32], channels: usize, w: usize, h: usize, config: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    if image.len() != channels * w * h || w == 0 || h == 0 {
        return Err(TrainError::Shape(format!("image has {} values, expected {channels}x{h}x{w}", image.len())));
    }
    let crop = sample_crop(w, h, config, rng);
    let flip = rng.random_bool(config.flip_prob);
    Ok(resize_crop(image, channels, w, h, crop, flip))
}
