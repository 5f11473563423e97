//! Binary CSI dump files.
//!
//! Little-endian layout:
//!
//! ```text
//! "CSID" | u32 version = 1 | u16 M | u16 N | u16 K | u32 T | f32 sample_rate | u8 label
//! T*M*N*K x (f32 re, f32 im), t-major, then m, n, k
//! ```
//!
//! Label 0 means unlabelled. There is no time origin in the header; decoded
//! frames are numbered from 0. Values are stored as `f32`, so a series
//! round-trips bit-exactly once it has been [`CsiSeries::quantize_f32`]-ed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::frame::{Case, CsiFrame, CsiSeries, Dims};

pub const MAGIC: [u8; 4] = *b"CSID";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 2 + 2 + 2 + 4 + 4 + 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("bad magic {0:?}, expected \"CSID\"")]
    MagicMismatch([u8; 4]),
    #[error("unsupported dump version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated dump: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("dump dimensions overflow: {tx}x{rx}x{subcarriers} over {frames} frames")]
    DimensionOverflow { tx: u16, rx: u16, subcarriers: u16, frames: u32 },
    #[error("dump holds no frames")]
    EmptySeries,
    #[error("invalid label byte {0}")]
    InvalidLabel(u8),
    #[error("series does not fit the dump header: {0}")]
    Unrepresentable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(series: &CsiSeries) -> Result<Vec<u8>, DumpError> {
    let dims = series.dims();
    let narrow = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| DumpError::Unrepresentable(format!("{what} = {v}")))
    };
    let tx = narrow(dims.tx, "M")?;
    let rx = narrow(dims.rx, "N")?;
    let k = narrow(dims.subcarriers, "K")?;
    let frames = u32::try_from(series.len())
        .map_err(|_| DumpError::Unrepresentable(format!("T = {}", series.len())))?;

    let mut out = Vec::with_capacity(HEADER_LEN + series.len() * dims.len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&tx.to_le_bytes());
    out.extend_from_slice(&rx.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    out.extend_from_slice(&(series.sample_rate_hz as f32).to_le_bytes());
    out.push(series.label.map_or(0, Case::id));
    for frame in series.frames() {
        for h in frame.values() {
            out.extend_from_slice(&(h.re as f32).to_le_bytes());
            out.extend_from_slice(&(h.im as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<CsiSeries, DumpError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(DumpError::MagicMismatch(bytes[..4].try_into().unwrap()));
        }
        return Err(DumpError::Truncated { expected: HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(DumpError::MagicMismatch(magic));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let (tx, rx, k) = (u16_at(8), u16_at(10), u16_at(12));
    let frames = u32_at(14);
    let sample_rate = f32::from_le_bytes(bytes[18..22].try_into().unwrap());
    let label_byte = bytes[22];

    if frames == 0 {
        return Err(DumpError::EmptySeries);
    }
    let overflow = || DumpError::DimensionOverflow { tx, rx, subcarriers: k, frames };
    let per_frame = (tx as u64) * (rx as u64) * (k as u64);
    let payload = per_frame
        .checked_mul(frames as u64)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(overflow)?;
    if per_frame == 0 || usize::try_from(payload).is_err() {
        return Err(overflow());
    }
    let expected = HEADER_LEN as u64 + payload;
    if (bytes.len() as u64) < expected {
        return Err(DumpError::Truncated { expected, found: bytes.len() as u64 });
    }
    let label = match label_byte {
        0 => None,
        id => Some(Case::from_id(id).map_err(|_| DumpError::InvalidLabel(id))?),
    };

    let dims = Dims::new(tx as usize, rx as usize, k as usize);
    let mut cursor = HEADER_LEN;
    let mut out = Vec::with_capacity(frames as usize);
    for t in 0..frames as u64 {
        let mut values = Vec::with_capacity(dims.len());
        for _ in 0..dims.len() {
            let re = f32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap());
            let im = f32::from_le_bytes(bytes[cursor + 4..cursor + 8].try_into().unwrap());
            values.push(Complex64::new(re as f64, im as f64));
            cursor += 8;
        }
        out.push(CsiFrame::new(dims, t, values).map_err(|e| DumpError::Unrepresentable(e.to_string()))?);
    }
    CsiSeries::new(out, sample_rate as f64, label).map_err(|e| DumpError::Unrepresentable(e.to_string()))
}

pub fn write_dump(series: &CsiSeries, path: impl AsRef<Path>) -> Result<(), DumpError> {
    let bytes = encode(series)?;
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(())
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<CsiSeries, DumpError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}
