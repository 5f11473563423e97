//! Multipath CSI synthesis.
//!
//! Every subcarrier value is the superposition of the pair's paths,
//! `h_{m,n,k} = e^{-j phi} sum_l A_l e^{-j 2 pi d_l(t) / lambda_k}`,
//! with `d_l(t) = length + t * drift`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::frame::{CsiFrame, CsiSeries, Pair};
use crate::scenario::{PhaseOffsetMode, ScenarioConfig};
use crate::{CsiError, Result};

/// Frame randomness is a pure function of `(seed, t)`: each frame owns a
/// ChaCha stream selected by its sample index.
fn frame_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

/// Knot draws of the slow drift live on a seed disjoint from the frame streams.
fn knot_rng(seed: u64, knot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(knot);
    rng
}

/// Unit complex normals for every path of every pair, in pair-major order.
fn knot_noise(scenario: &ScenarioConfig, knot: u64) -> Vec<Complex64> {
    let mut rng = knot_rng(scenario.seed, knot);
    let count: usize = scenario.paths.iter().map(Vec::len).sum();
    (0..count).map(|_| complex_normal(&mut rng)).collect()
}

/// Unit drift of every path at sample `t`: linear interpolation between
/// knots every `drift_period_frames`, renormalized to unit variance.
fn correlated_noise(scenario: &ScenarioConfig, t: u64) -> Vec<Complex64> {
    let period = scenario.drift_period_frames;
    let knot = t / period;
    let u = (t % period) as f64 / period as f64;
    let a = knot_noise(scenario, knot);
    if u == 0.0 {
        return a;
    }
    let b = knot_noise(scenario, knot + 1);
    let norm = ((1.0 - u).powi(2) + u * u).sqrt();
    a.iter().zip(&b).map(|(x, y)| (x * (1.0 - u) + y * u) / norm).collect()
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / std::f64::consts::SQRT_2
}

/// Simulates the frame at sample index `t`.
pub fn simulate_frame(scenario: &ScenarioConfig, t: u64) -> Result<CsiFrame> {
    scenario.validate()?;
    let wavelengths = scenario.wavelengths();
    simulate_frame_with(scenario, &wavelengths, t)
}

fn simulate_frame_with(scenario: &ScenarioConfig, wavelengths: &[f64], t: u64) -> Result<CsiFrame> {
    let dims = scenario.dims();
    let mut rng = frame_rng(scenario.seed, t);

    // Drawn unconditionally so that the jitter stream is the same in both modes.
    let phase: f64 = rng.random::<f64>() * TAU;
    let offset = match scenario.phase_offset_mode {
        PhaseOffsetMode::None => Complex64::new(1.0, 0.0),
        PhaseOffsetMode::PerFrameRandom => Complex64::from_polar(1.0, -phase),
    };

    let drift = (scenario.drift_sigma > 0.0).then(|| correlated_noise(scenario, t));
    let mut path_counter = 0;
    let mut frame = CsiFrame::zeros(dims, t);
    for m in 0..dims.tx {
        for n in 0..dims.rx {
            let pair = Pair::new(m, n);
            let pair_index = m * dims.rx + n;
            let paths = scenario.pair_paths(pair);
            let out = frame.pair_mut(pair)?;
            for (l, path) in paths.iter().enumerate() {
                let length = path.length_at(t);
                if length < 0.0 {
                    return Err(CsiError::NegativeLength { pair_index, path: l, t });
                }
                let mut relative = complex_normal(&mut rng) * scenario.jitter_sigma;
                if let Some(noise) = &drift {
                    relative += noise[path_counter] * scenario.drift_sigma;
                }
                path_counter += 1;
                let jitter = relative * path.attenuation.norm();
                let attenuation = path.attenuation + jitter;
                for (h, &lambda) in out.iter_mut().zip(wavelengths) {
                    *h += attenuation * Complex64::from_polar(1.0, -TAU * length / lambda);
                }
            }
            for h in out.iter_mut() {
                *h *= offset;
            }
        }
    }
    Ok(frame)
}

/// Simulates `t_count` consecutive frames starting at sample 0.
pub fn simulate_series(scenario: &ScenarioConfig, t_count: usize) -> Result<CsiSeries> {
    simulate_series_from(scenario, 0, t_count)
}

/// Simulates frames `start .. start + t_count`.
pub fn simulate_series_from(scenario: &ScenarioConfig, start: u64, t_count: usize) -> Result<CsiSeries> {
    if t_count == 0 {
        return Err(CsiError::EmptySeries);
    }
    scenario.validate()?;
    let wavelengths = scenario.wavelengths();
    let frames = (0..t_count as u64)
        .map(|i| simulate_frame_with(scenario, &wavelengths, start + i))
        .collect::<Result<Vec<_>>>()?;
    CsiSeries::new(frames, scenario.sample_rate_hz, Some(scenario.case_id))
}
