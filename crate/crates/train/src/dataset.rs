//! `CRDS` dataset container: paired RP and merged-ratio tensors per label.
//!
//! Layout (little endian): magic, u32 version, u16 `Q`, u16 width, u16
//! height, u32 record count, then per record a u8 case id, the `1 x h x w`
//! RP tensor and the `Q x h x w` ratio tensor as f32.

use std::fs;
use std::path::Path;

use presence_csi::Case;

use crate::{Result, TrainError};

pub const MAGIC: &[u8; 4] = b"CRDS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: Case,
    pub rp: Vec<f32>,
    pub ratio: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub q: usize,
    pub width: usize,
    pub height: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(q: usize, width: usize, height: usize) -> Result<Self> {
        if q == 0 || width == 0 || height == 0 || q > u16::MAX as usize || width > u16::MAX as usize || height > u16::MAX as usize {
            return Err(TrainError::Dataset(format!("invalid tensor geometry q={q} {width}x{height}")));
        }
        Ok(Self { q, width, height, samples: Vec::new() })
    }

    pub fn plane(&self) -> usize {
        self.width * self.height
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.rp.len() != self.plane() || sample.ratio.len() != self.q * self.plane() {
            return Err(TrainError::Dataset(format!(
                "sample tensors have {} and {} values, expected {} and {}",
                sample.rp.len(),
                sample.ratio.len(),
                self.plane(),
                self.q * self.plane()
            )));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Case> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }

    /// Errors unless every case has at least `min` samples.
    pub fn require_classes(&self, min: usize) -> Result<()> {
        let counts = self.class_counts();
        for case in Case::ALL {
            if counts[case.index()] < min {
                return Err(TrainError::MissingClass { case: case.id(), count: counts[case.index()], needed: min });
            }
        }
        Ok(())
    }

    /// Concatenated RP tensors of the given samples.
    pub fn rp_batch(&self, indices: &[usize]) -> Vec<f32> {
        indices.iter().flat_map(|&i| self.samples[i].rp.iter().copied()).collect()
    }

    pub fn ratio_batch(&self, indices: &[usize]) -> Vec<f32> {
        indices.iter().flat_map(|&i| self.samples[i].ratio.iter().copied()).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.len() * (1 + 4 * (1 + self.q) * self.plane()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.q, self.width, self.height] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for s in &self.samples {
            out.push(s.label.id());
            for v in s.rp.iter().chain(&s.ratio) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| TrainError::Dataset(msg);
        if bytes.len() < 18 || &bytes[..4] != MAGIC {
            return Err(bad("not a CRDS container".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported dataset version {version}")));
        }
        let mut data = Self::new(u16_at(8), u16_at(10), u16_at(12))?;
        let count = u32::from_le_bytes(bytes[14..18].try_into().expect("4 bytes")) as usize;
        let record = 1 + 4 * (1 + data.q) * data.plane();
        let body = &bytes[18..];
        if body.len() != count * record {
            return Err(bad(format!("expected {count} records of {record} bytes, found {} bytes", body.len())));
        }
        let floats = |b: &[u8]| b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect::<Vec<_>>();
        for chunk in body.chunks_exact(record) {
            let label = Case::from_id(chunk[0]).map_err(|e| bad(e.to_string()))?;
            let split = 1 + 4 * data.plane();
            data.samples.push(Sample { label, rp: floats(&chunk[1..split]), ratio: floats(&chunk[split..]) });
        }
        Ok(data)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let mut d = Dataset::new(2, 3, 2).unwrap();
        for (i, case) in Case::ALL.into_iter().enumerate() {
            let rp = (0..6).map(|v| (v + i) as f32).collect();
            let ratio = (0..12).map(|v| v as f32 * 0.5 - i as f32).collect();
            d.push(Sample { label: case, rp, ratio }).unwrap();
        }
        d
    }

    #[test]
    fn round_trip_and_layout() {
        let d = toy();
        let bytes = d.encode();
        assert_eq!(&bytes[..4], b"CRDS");
        assert_eq!(bytes[18], 1, "first record starts with its case id");
        assert_eq!(bytes.len(), 18 + 4 * (1 + 4 * 18));
        assert_eq!(Dataset::decode(&bytes).unwrap(), d);
        assert!(Dataset::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn class_requirements() {
        let mut d = toy();
        d.require_classes(1).unwrap();
        assert!(d.require_classes(2).is_err());
        d.samples.retain(|s| s.label != Case::LosStatic);
        assert!(matches!(d.require_classes(1), Err(TrainError::MissingClass { case: 3, .. })));
        assert!(d.push(Sample { label: Case::Empty, rp: vec![0.0; 5], ratio: vec![0.0; 12] }).is_err());
    }
}
