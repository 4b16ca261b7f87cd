use std::path::Path;

use super::{DataError, GrayImage};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"F32I";
const HEADER: usize = 16;

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Lossless float format: `F32I`, u32 height, u32 width, u32 reserved,
/// then row-major little-endian f32 pixels.
pub fn encode_f32(image: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * image.pixels().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in image.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f32(bytes: &[u8]) -> Result<GrayImage, DataError> {
    let err = |offset, msg: String| DataError::Parse { offset, msg };
    if bytes.len() < HEADER {
        return Err(err(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(err(0, "missing F32I magic".into()));
    }
    let (h, w) = (u32_at(bytes, 4) as usize, u32_at(bytes, 8) as usize);
    let need = h * w * 4;
    if bytes.len() - HEADER < need {
        return Err(err(bytes.len(), format!("truncated payload: {} of {need} bytes", bytes.len() - HEADER)));
    }
    let px = bytes[HEADER..HEADER + need]
        .chunks(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    GrayImage::new(h, w, px)
}

pub fn load_f32(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_f32(&bytes)?)
}

pub fn save_f32(path: &Path, image: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_f32(image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_round_trip() {
        let img = GrayImage::new(2, 2, vec![0.1, -0.333_333_34, 1.0, f32::MIN_POSITIVE]).unwrap();
        let bytes = encode_f32(&img);
        assert_eq!(bytes.len(), 16 + 16);
        assert_eq!(decode_f32(&bytes).unwrap(), img);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_f32(b"F32I").is_err());
        let mut bytes = encode_f32(&GrayImage::new(1, 1, vec![0.0]).unwrap());
        bytes[0] = b'X';
        assert!(decode_f32(&bytes).is_err());
        bytes[0] = b'F';
        bytes.pop();
        assert!(decode_f32(&bytes).is_err());
    }
}
