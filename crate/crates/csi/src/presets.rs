//! Preset rooms for the four presence cases.
//!
//! A 2x2 link across a rectangular room. Static paths are the line-of-sight
//! path plus first-order wall reflections (image method). Presence cases add
//! a scattering path from the person and, for the NLoS static case, a small
//! complex gain bias on the transmission pair nearest the person. All
//! constants end up in the emitted [`ScenarioConfig`], so a dumped config
//! reproduces the series exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::frame::{Case, Pair};
use crate::scenario::{PathSpec, PhaseOffsetMode, ScenarioConfig};

pub const DEFAULT_CARRIER_HZ: f64 = 2.447e9;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 20e6;
pub const DEFAULT_SUBCARRIERS: usize = 56;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10.0;
pub const DEFAULT_JITTER_SIGMA: f64 = 0.01;
pub const DEFAULT_DRIFT_SIGMA: f64 = 0.01;
pub const DEFAULT_DRIFT_PERIOD_FRAMES: u64 = 50;

type Point = (f64, f64);

fn dist(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Where the standing person is for the NLoS static case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    UpperLeft,
    LowerRight,
}

impl Corner {
    pub const ALL: [Corner; 2] = [Corner::UpperLeft, Corner::LowerRight];

    pub fn tag(self) -> &'static str {
        match self {
            Corner::UpperLeft => "upper-left",
            Corner::LowerRight => "lower-right",
        }
    }
}

/// Room geometry and the strengths of the presence effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width_m: f64,
    pub depth_m: f64,
    pub tx_center: Point,
    pub rx_center: Point,
    pub antenna_spacing_m: f64,
    /// Wall reflection coefficient applied to every image path.
    pub reflection_coefficient: f64,
    /// Walls used for first-order reflections: 0 = x=0, 1 = x=W, 2 = y=0, 3 = y=H.
    pub walls: Vec<usize>,
    /// Standing position of the person per corner.
    pub nlos_positions: [Point; 2],
    pub nlos_scatter: f64,
    /// Phase of the person's scattering path per corner.
    pub nlos_scatter_phase: [f64; 2],
    /// Complex gain bias of pair (0, 0) per corner, as (magnitude, phase rad).
    pub nlos_bias: [(f64, f64); 2],
    pub los_blockage: (f64, f64),
    pub los_scatter: f64,
    pub walker_scatter: f64,
    pub walker_start: Point,
    pub walker_drift_m_per_sample: f64,
}

impl Default for Room {
    fn default() -> Self {
        Self {
            width_m: 7.0,
            depth_m: 6.75,
            tx_center: (0.45, 0.40),
            rx_center: (6.55, 6.30),
            antenna_spacing_m: 0.061,
            reflection_coefficient: 0.42,
            walls: vec![0, 2, 3],
            nlos_positions: [(0.55, 6.25), (6.5, 0.55)],
            nlos_scatter: 0.055,
            nlos_scatter_phase: [0.4, 0.4],
            nlos_bias: [(0.045, 0.70), (0.040, 0.90)],
            los_blockage: (0.30, 1.1),
            los_scatter: 0.25,
            walker_scatter: 0.35,
            walker_start: (2.6, 4.1),
            walker_drift_m_per_sample: 0.031,
        }
    }
}

impl Room {
    /// Antenna positions, spaced perpendicular to the link direction.
    fn antennas(&self, center: Point) -> [Point; 2] {
        let dx = self.rx_center.0 - self.tx_center.0;
        let dy = self.rx_center.1 - self.tx_center.1;
        let norm = (dx * dx + dy * dy).sqrt();
        let (px, py) = (-dy / norm, dx / norm);
        let h = self.antenna_spacing_m / 2.0;
        [(center.0 - px * h, center.1 - py * h), (center.0 + px * h, center.1 + py * h)]
    }

    fn image(&self, p: Point, wall: usize) -> Point {
        match wall {
            0 => (-p.0, p.1),
            1 => (2.0 * self.width_m - p.0, p.1),
            2 => (p.0, -p.1),
            _ => (p.0, 2.0 * self.depth_m - p.1),
        }
    }

    /// Line-of-sight and wall-reflection paths of one pair.
    fn static_paths(&self, tx: Point, rx: Point) -> Vec<PathSpec> {
        let los = dist(tx, rx);
        let mut paths = vec![PathSpec::fixed(Complex64::new(1.0, 0.0), los)];
        for &wall in &self.walls {
            let d = dist(self.image(tx, wall), rx);
            // Reflection flips the field; free-space spreading relative to LoS.
            let gain = -self.reflection_coefficient * los / d;
            paths.push(PathSpec::fixed(Complex64::new(gain, 0.0), d));
        }
        paths
    }

    /// Builds the scenario for a case. `corner` only matters for the NLoS case.
    pub fn scenario(&self, case: Case, corner: Corner, seed: u64) -> ScenarioConfig {
        let tx = self.antennas(self.tx_center);
        let rx = self.antennas(self.rx_center);
        let mut paths = Vec::with_capacity(4);
        for (m, &tx_pos) in tx.iter().enumerate() {
            for (n, &rx_pos) in rx.iter().enumerate() {
                let mut list = self.static_paths(tx_pos, rx_pos);
                match case {
                    Case::Empty => {}
                    Case::NlosStatic => {
                        let person = self.nlos_positions[corner as usize];
                        let length = dist(tx_pos, person) + dist(person, rx_pos);
                        let phase = self.nlos_scatter_phase[corner as usize];
                        list.push(PathSpec::fixed(Complex64::from_polar(self.nlos_scatter, phase), length));
                        if (m, n) == (0, 0) {
                            let (mag, phase) = self.nlos_bias[corner as usize];
                            let gain = Complex64::new(1.0, 0.0) + Complex64::from_polar(mag, phase);
                            for path in &mut list {
                                path.attenuation *= gain;
                            }
                        }
                    }
                    Case::LosStatic => {
                        let (mag, phase) = self.los_blockage;
                        list[0].attenuation *= Complex64::from_polar(mag, phase);
                        let person = ((tx_pos.0 + rx_pos.0) / 2.0, (tx_pos.1 + rx_pos.1) / 2.0 + 0.15);
                        let length = dist(tx_pos, person) + dist(person, rx_pos);
                        list.push(PathSpec::fixed(Complex64::from_polar(self.los_scatter, -0.6), length));
                    }
                    Case::Dynamic => {
                        let start = self.walker_start;
                        let length = dist(tx_pos, start) + dist(start, rx_pos);
                        list.push(PathSpec {
                            attenuation: Complex64::from_polar(self.walker_scatter, 0.9),
                            length_m: length,
                            drift_m_per_sample: self.walker_drift_m_per_sample,
                        });
                    }
                }
                paths.push(list);
            }
        }

        ScenarioConfig {
            case_id: case,
            variant: if case == Case::NlosStatic { corner.tag().to_string() } else { String::new() },
            tx_antennas: 2,
            rx_antennas: 2,
            subcarriers: DEFAULT_SUBCARRIERS,
            paths,
            carrier_hz: DEFAULT_CARRIER_HZ,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            phase_offset_mode: PhaseOffsetMode::PerFrameRandom,
            jitter_sigma: DEFAULT_JITTER_SIGMA,
            drift_sigma: DEFAULT_DRIFT_SIGMA,
            drift_period_frames: DEFAULT_DRIFT_PERIOD_FRAMES,
            seed,
        }
    }
}

/// Scenario of the default room for a case; the NLoS case uses the upper-left corner.
pub fn preset_scenario(case: Case, seed: u64) -> ScenarioConfig {
    Room::default().scenario(case, Corner::UpperLeft, seed)
}

/// Scenario of the default room with an explicit NLoS corner.
pub fn preset_variant(case: Case, corner: Corner, seed: u64) -> ScenarioConfig {
    Room::default().scenario(case, corner, seed)
}

/// The five labelled (case, variant) combinations of a data collection.
pub fn preset_collection(seed: u64) -> Vec<ScenarioConfig> {
    let room = Room::default();
    let mut out = vec![room.scenario(Case::Empty, Corner::UpperLeft, seed)];
    for (i, corner) in Corner::ALL.into_iter().enumerate() {
        out.push(room.scenario(Case::NlosStatic, corner, seed.wrapping_add(1 + i as u64)));
    }
    out.push(room.scenario(Case::LosStatic, Corner::UpperLeft, seed.wrapping_add(3)));
    out.push(room.scenario(Case::Dynamic, Corner::UpperLeft, seed.wrapping_add(4)));
    out
}

/// Pair whose gain the NLoS person biases.
pub const NLOS_BIASED_PAIR: Pair = Pair { tx: 0, rx: 0 };
