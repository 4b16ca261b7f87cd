use std::path::Path;

use super::{DataError, GrayImage};
use crate::error::{Error, Result};

/// Decoded binary PGM with its sample range.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub image: GrayImage,
    pub maxval: u16,
}

fn parse_err(offset: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        offset,
        msg: msg.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, DataError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| parse_err(start, format!("{what} out of range")))
    }
}

/// Parses binary PGM (`P5`) with 8- or 16-bit samples; file range
/// `[0, maxval]` maps linearly onto `[−1, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm, DataError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(parse_err(0, "missing P5 magic"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(maxval_at, "zero image dimension"));
    }
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(parse_err(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(parse_err(h.pos, "expected single whitespace after maxval")),
    }
    let wide = maxval > 255;
    let bytes_per = if wide { 2 } else { 1 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bytes_per))
        .ok_or_else(|| parse_err(h.pos, "image too large"))?;
    let payload = &bytes[h.pos..];
    if payload.len() < need {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let scale = maxval as f64;
    let pixels = payload[..need]
        .chunks(bytes_per)
        .map(|c| {
            let v = if wide { u16::from_be_bytes([c[0], c[1]]) } else { c[0] as u16 };
            (v as f64 / scale * 2.0 - 1.0) as f32
        })
        .collect();
    Ok(Pgm {
        image: GrayImage::new(height, width, pixels)?,
        maxval: maxval as u16,
    })
}

/// Canonical `P5` encoding (`P5\n<w> <h>\n<maxval>\n`), big-endian samples
/// when `maxval > 255`.
pub fn encode_pgm(image: &GrayImage, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    let wide = maxval > 255;
    for &v in image.pixels() {
        let unit = ((v as f64 + 1.0) / 2.0).clamp(0.0, 1.0);
        let q = (unit * maxval as f64).round() as u16;
        if wide {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

pub fn load_pgm(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_pgm(&bytes)?)
}

pub fn save_pgm(path: &Path, image: &GrayImage, maxval: u16) -> Result<()> {
    std::fs::write(path, encode_pgm(image, maxval)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_header() {
        let mut bytes = b"P5\n32 32\n255\n".to_vec();
        bytes.extend(std::iter::repeat_n(128u8, 32 * 32));
        let p = decode_pgm(&bytes).unwrap();
        assert_eq!(p.image.dims(), (32, 32));
        assert_eq!(p.maxval, 255);
    }

    #[test]
    fn skips_comments() {
        let mut bytes = b"P5\n# made by hand\n2 # width\n1\n# range next\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let p = decode_pgm(&bytes).unwrap();
        assert_eq!(p.image.dims(), (1, 2));
        assert_eq!(p.image.pixels(), &[-1.0, 1.0]);
    }

    #[test]
    fn reports_byte_offsets() {
        match decode_pgm(b"P6\n1 1\n255\n\0") {
            Err(DataError::Parse { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        match decode_pgm(b"P5\n4 x\n255\n") {
            Err(DataError::Parse { offset: 5, .. }) => {}
            other => panic!("{other:?}"),
        }
        let truncated = b"P5\n4 4\n255\n\0\0\0";
        match decode_pgm(truncated) {
            Err(DataError::Parse { offset, msg }) => {
                assert_eq!(offset, truncated.len());
                assert!(msg.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        assert!(decode_pgm(b"P5\n1 1\n70000\n\0\0").is_err());
    }

    #[test]
    fn canonical_files_are_byte_stable() {
        let mut eight = b"P5\n3 2\n255\n".to_vec();
        eight.extend([0u8, 17, 128, 200, 254, 255]);
        let p = decode_pgm(&eight).unwrap();
        assert_eq!(encode_pgm(&p.image, p.maxval), eight);

        let mut sixteen = b"P5\n2 1\n65535\n".to_vec();
        sixteen.extend([0x12u8, 0x34, 0xff, 0xfe]);
        let p = decode_pgm(&sixteen).unwrap();
        assert_eq!(encode_pgm(&p.image, p.maxval), sixteen);
    }

    proptest! {
        #[test]
        fn sixteen_bit_round_trip_within_quantization(px in proptest::collection::vec(-1.0f32..=1.0, 12)) {
            let img = GrayImage::new(3, 4, px).unwrap();
            let back = decode_pgm(&encode_pgm(&img, u16::MAX)).unwrap().image;
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                // Half a quantization step in [0,1] units is 1/131070; in
                // [−1,1] units that doubles.
                prop_assert!(((a - b).abs() as f64) <= 2.0 / 65535.0);
            }
        }
    }
}
