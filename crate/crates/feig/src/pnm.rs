//! Binary PGM (P5) and PPM (P6) renders with max value 255.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::ratio::{GrayImage, RgbImage};
use crate::{FeigError, Result};

fn narrow(v: u16) -> Result<u8> {
    u8::try_from(v).map_err(|_| FeigError::InvalidArgument(format!("pixel value {v} exceeds 255")))
}

fn encode(bytes: &[u8], width: usize, height: usize, subtype: PnmSubtype, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out).with_subtype(subtype).write_image(bytes, width as u32, height as u32, color)?;
    Ok(out)
}

/// P5 bytes of an 8-bit greyscale raster.
pub fn encode_pgm(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(FeigError::DimensionMismatch { expected: width * height, actual: pixels.len() });
    }
    encode(pixels, width, height, PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
}

pub fn encode_gray(image: &GrayImage) -> Result<Vec<u8>> {
    let bytes = image.pixels.iter().map(|&v| narrow(v)).collect::<Result<Vec<_>>>()?;
    encode_pgm(&bytes, image.width, image.height)
}

/// P6 bytes of an RGB image.
pub fn encode_rgb(image: &RgbImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(image.pixels.len() * 3);
    for px in &image.pixels {
        for &c in px {
            bytes.push(narrow(c)?);
        }
    }
    encode(&bytes, image.width, image.height, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(bytes)?;
    writer.flush()?;
    Ok(())
}
