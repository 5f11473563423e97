//! CSI frames and time series.
//!
//! A frame holds the complex channel response of every transmission pair
//! `(m, n)` on every subcarrier `k`, stored `m`-major then `n`, then `k`.
//! All indices are zero based.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{CsiError, Result};

/// The four presence cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Case {
    Empty = 1,
    NlosStatic = 2,
    LosStatic = 3,
    Dynamic = 4,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::Empty, Case::NlosStatic, Case::LosStatic, Case::Dynamic];

    /// Case id in `1..=4`.
    pub fn id(self) -> u8 {
        self as u8
    }

    /// Zero-based class index in `0..4`.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Case::Empty),
            2 => Ok(Case::NlosStatic),
            3 => Ok(Case::LosStatic),
            4 => Ok(Case::Dynamic),
            other => Err(CsiError::InvalidCase(other)),
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        u8::try_from(index + 1)
            .map_err(|_| CsiError::InvalidCase(u8::MAX))
            .and_then(Self::from_id)
    }

    pub fn is_static(self) -> bool {
        self != Case::Dynamic
    }
}

impl From<Case> for u8 {
    fn from(case: Case) -> u8 {
        case.id()
    }
}

impl TryFrom<u8> for Case {
    type Error = CsiError;

    fn try_from(id: u8) -> Result<Self> {
        Case::from_id(id)
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Case::Empty => "empty",
            Case::NlosStatic => "nlos-static",
            Case::LosStatic => "los-static",
            Case::Dynamic => "dynamic",
        };
        write!(f, "case {} ({name})", self.id())
    }
}

/// Antenna and subcarrier counts of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub tx: usize,
    pub rx: usize,
    pub subcarriers: usize,
}

impl Dims {
    pub fn new(tx: usize, rx: usize, subcarriers: usize) -> Self {
        Self { tx, rx, subcarriers }
    }

    pub fn pairs(&self) -> usize {
        self.tx * self.rx
    }

    pub fn len(&self) -> usize {
        self.tx * self.rx * self.subcarriers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A transmission pair: transmit antenna `m`, receive antenna `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub tx: usize,
    pub rx: usize,
}

impl Pair {
    pub fn new(tx: usize, rx: usize) -> Self {
        Self { tx, rx }
    }
}

/// Complex CSI of all transmission pairs at one sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    dims: Dims,
    pub timestamp: u64,
    values: Vec<Complex64>,
}

impl CsiFrame {
    pub fn new(dims: Dims, timestamp: u64, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(CsiError::DimensionMismatch {
                expected: dims.len(),
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CsiError::NonFinite(format!("frame value at flat index {pos}")));
        }
        Ok(Self { dims, timestamp, values })
    }

    pub fn zeros(dims: Dims, timestamp: u64) -> Self {
        Self { dims, timestamp, values: vec![Complex64::new(0.0, 0.0); dims.len()] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn offset(&self, pair: Pair) -> Result<usize> {
        if pair.tx >= self.dims.tx || pair.rx >= self.dims.rx {
            return Err(CsiError::IndexOutOfRange { pair, dims: self.dims });
        }
        Ok((pair.tx * self.dims.rx + pair.rx) * self.dims.subcarriers)
    }

    /// Subcarrier vector `h_{m,n}` of one transmission pair.
    pub fn pair(&self, pair: Pair) -> Result<&[Complex64]> {
        let start = self.offset(pair)?;
        Ok(&self.values[start..start + self.dims.subcarriers])
    }

    pub fn pair_mut(&mut self, pair: Pair) -> Result<&mut [Complex64]> {
        let start = self.offset(pair)?;
        let k = self.dims.subcarriers;
        Ok(&mut self.values[start..start + k])
    }

    pub fn get(&self, tx: usize, rx: usize, k: usize) -> Option<Complex64> {
        if tx >= self.dims.tx || rx >= self.dims.rx || k >= self.dims.subcarriers {
            return None;
        }
        Some(self.values[(tx * self.dims.rx + rx) * self.dims.subcarriers + k])
    }

    /// Per-subcarrier amplitudes `|h_{m,n,k}|` of one pair.
    pub fn amplitudes(&self, pair: Pair) -> Result<Vec<f64>> {
        Ok(self.pair(pair)?.iter().map(|h| h.norm()).collect())
    }

    /// Per-subcarrier phases of one pair.
    pub fn phases(&self, pair: Pair) -> Result<Vec<f64>> {
        Ok(self.pair(pair)?.iter().map(|h| h.arg()).collect())
    }

    /// Largest amplitude over every entry of the frame.
    pub fn max_amplitude(&self) -> f64 {
        self.values.iter().map(|h| h.norm()).fold(0.0, f64::max)
    }

    /// Rounds every value to the nearest `f32` pair, the precision of the dump format.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            v.re = v.re as f32 as f64;
            v.im = v.im as f32 as f64;
        }
    }
}

/// Time-ordered CSI frames sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSeries {
    frames: Vec<CsiFrame>,
    pub sample_rate_hz: f64,
    pub label: Option<Case>,
}

impl CsiSeries {
    /// Builds a series, checking that dimensions agree and timestamps step by one.
    pub fn new(frames: Vec<CsiFrame>, sample_rate_hz: f64, label: Option<Case>) -> Result<Self> {
        if frames.is_empty() {
            return Err(CsiError::EmptySeries);
        }
        let dims = frames[0].dims;
        for pair in frames.windows(2) {
            if pair[1].dims != dims {
                return Err(CsiError::DimensionMismatch {
                    expected: dims.len(),
                    actual: pair[1].dims.len(),
                });
            }
            if pair[1].timestamp != pair[0].timestamp + 1 {
                return Err(CsiError::NonContiguousTimestamps {
                    previous: pair[0].timestamp,
                    next: pair[1].timestamp,
                });
            }
        }
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(CsiError::NonFinite(format!("sample rate {sample_rate_hz}")));
        }
        Ok(Self { frames, sample_rate_hz, label })
    }

    pub fn frames(&self) -> &[CsiFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.frames[0].dims
    }

    pub fn frame(&self, index: usize) -> Option<&CsiFrame> {
        self.frames.get(index)
    }

    pub fn quantize_f32(&mut self) {
        self.frames.iter_mut().for_each(CsiFrame::quantize_f32);
    }

    /// Consecutive sub-series `[start, start + len)`, timestamps preserved.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames.len() {
            return Err(CsiError::InsufficientHistory { needed: start + len, available: self.frames.len() });
        }
        Ok(Self {
            frames: self.frames[start..start + len].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            label: self.label,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_ids_round_trip() {
        for case in Case::ALL {
            assert_eq!(Case::from_id(case.id()).unwrap(), case);
            assert_eq!(Case::from_index(case.index()).unwrap(), case);
        }
        assert!(Case::from_id(0).is_err());
        assert!(Case::from_id(5).is_err());
    }

    #[test]
    fn frame_indexing() {
        let dims = Dims::new(2, 2, 3);
        let values = (0..12).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let frame = CsiFrame::new(dims, 0, values).unwrap();
        assert_eq!(frame.get(1, 0, 2).unwrap().re, 8.0);
        assert_eq!(frame.pair(Pair::new(0, 1)).unwrap()[0].re, 3.0);
        assert!(frame.pair(Pair::new(2, 0)).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let dims = Dims::new(1, 1, 1);
        let err = CsiFrame::new(dims, 0, vec![Complex64::new(f64::NAN, 0.0)]);
        assert!(matches!(err, Err(CsiError::NonFinite(_))));
    }

    #[test]
    fn series_requires_contiguous_timestamps() {
        let dims = Dims::new(1, 1, 1);
        let frames = vec![CsiFrame::zeros(dims, 0), CsiFrame::zeros(dims, 2)];
        assert!(matches!(
            CsiSeries::new(frames, 10.0, None),
            Err(CsiError::NonContiguousTimestamps { .. })
        ));
        assert!(matches!(CsiSeries::new(vec![], 10.0, None), Err(CsiError::EmptySeries)));
    }
}
