//! Binary checkpoint: magic `SYNDIFF1`, a header of little-endian u32
//! fields, then named f32 parameter records.

use std::collections::HashMap;
use std::path::Path;

use syndiff_tensor::Tensor;
use thiserror::Error;

use super::model::SynDiffNets;
use crate::error::{Error, Result};
use crate::nets::{Module, NetConfig};
use crate::random::seeded;
use crate::schedule::{ExponentForm, FastSchedule};

pub const MAGIC: &[u8; 8] = b"SYNDIFF1";
const HEADER_FIELDS: u32 = 14;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("truncated checkpoint at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("invalid checkpoint header: {0}")]
    BadHeader(String),
    #[error("parameter name at byte {offset} is not UTF-8")]
    BadName { offset: usize },
    #[error("checkpoint lacks parameter {0}")]
    MissingParam(String),
    #[error("checkpoint has unexpected parameter {0}")]
    UnknownParam(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint was trained for {expected}x{expected} images, got {found:?}")]
    ImageSize { expected: usize, found: (usize, usize) },
}

/// Architecture and schedule needed to rebuild the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub net: NetConfig,
    pub total_steps: usize,
    pub step: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub form: ExponentForm,
}

impl CheckpointHeader {
    pub fn schedule(&self) -> Result<FastSchedule> {
        Ok(FastSchedule::with_form(
            self.total_steps,
            self.step,
            self.beta_min,
            self.beta_max,
            self.form,
        )?)
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| CheckpointError::BadHeader(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    let bits = v.to_bits();
    out.extend_from_slice(&(bits as u32).to_le_bytes());
    out.extend_from_slice(&((bits >> 32) as u32).to_le_bytes());
}

pub fn encode_checkpoint(header: &CheckpointHeader, nets: &SynDiffNets<f32>) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&HEADER_FIELDS.to_le_bytes());
    let n = &header.net;
    for v in [
        n.image_size,
        n.base_channels,
        n.levels,
        n.embed_dim,
        n.hidden_dim,
        n.disc_channels,
        n.resnet_channels,
        header.total_steps,
        header.step,
    ] {
        push_u32(&mut out, v)?;
    }
    push_f64(&mut out, header.beta_min);
    push_f64(&mut out, header.beta_max);
    push_u32(&mut out, header.form.code() as usize)?;

    let params = nets.named_params();
    push_u32(&mut out, params.len())?;
    for (name, t) in params {
        push_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        push_u32(&mut out, t.rank())?;
        for &d in t.shape() {
            push_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated { offset: self.pos, what })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        let lo = self.u32(what)? as u64;
        let hi = self.u32(what)? as u64;
        Ok(f64::from_bits(lo | (hi << 32)))
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize), CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let fields = r.u32("header length")?;
    if fields != HEADER_FIELDS as usize {
        return Err(CheckpointError::BadHeader(format!(
            "expected {HEADER_FIELDS} header fields, found {fields}"
        )));
    }
    let mut ints = [0usize; 9];
    for v in &mut ints {
        *v = r.u32("header")?;
    }
    let beta_min = r.f64("header")?;
    let beta_max = r.f64("header")?;
    let code = r.u32("header")?;
    let form = ExponentForm::from_code(code as u32)
        .ok_or_else(|| CheckpointError::BadHeader(format!("unknown schedule form {code}")))?;
    let net = NetConfig {
        image_size: ints[0],
        base_channels: ints[1],
        levels: ints[2],
        embed_dim: ints[3],
        hidden_dim: ints[4],
        disc_channels: ints[5],
        resnet_channels: ints[6],
    };
    let header = CheckpointHeader {
        net,
        total_steps: ints[7],
        step: ints[8],
        beta_min,
        beta_max,
        form,
    };
    Ok((header, r.pos))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, SynDiffNets<f32>)> {
    let (header, start) = decode_header(bytes)?;
    header.net.validate().map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    header.schedule().map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let mut r = Reader { bytes, pos: start };
    let count = r.u32("parameter count")?;
    let mut records: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let len = r.u32("name length")?;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| CheckpointError::BadName { offset: at })?
            .to_string();
        let rank = r.u32("rank")?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dims")?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(CheckpointError::Truncated { offset: r.pos, what: "payload" })?;
        let data = r
            .take(n, "payload")?
            .chunks(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        records.insert(name, (shape, data));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::BadHeader(format!("{} trailing bytes", bytes.len() - r.pos)).into());
    }
    let mut nets = SynDiffNets::<f32>::new(header.net, &mut seeded(0))?;
    let mut err: Option<CheckpointError> = None;
    nets.visit_mut("", &mut |name, p| {
        if err.is_some() {
            return;
        }
        match records.remove(&name) {
            None => err = Some(CheckpointError::MissingParam(name)),
            Some((shape, _)) if shape != p.shape() => {
                err = Some(CheckpointError::ParamShape {
                    name,
                    expected: p.shape().to_vec(),
                    found: shape,
                })
            }
            Some((shape, data)) => *p = Tensor::parameter(data, &shape).expect("checked shape"),
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    if let Some(extra) = records.into_keys().min() {
        return Err(CheckpointError::UnknownParam(extra).into());
    }
    Ok((header, nets))
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, nets: &SynDiffNets<f32>) -> Result<()> {
    let bytes = encode_checkpoint(header, nets)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, SynDiffNets<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetConfig {
        NetConfig {
            image_size: 16,
            base_channels: 4,
            levels: 2,
            embed_dim: 8,
            hidden_dim: 8,
            disc_channels: 4,
            resnet_channels: 4,
        }
    }

    fn header() -> CheckpointHeader {
        CheckpointHeader {
            net: small(),
            total_steps: 1000,
            step: 250,
            beta_min: 0.1,
            beta_max: 20.0,
            form: ExponentForm::Printed,
        }
    }

    #[test]
    fn bit_exact_round_trip() {
        let nets = SynDiffNets::<f32>::new(small(), &mut seeded(42)).unwrap();
        let bytes = encode_checkpoint(&header(), &nets).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let (h, loaded) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(h, header());
        let a = nets.named_params();
        let b = loaded.named_params();
        assert_eq!(a.len(), b.len());
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ta.shape(), tb.shape());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ta), bits(tb), "{na}");
        }
        assert_eq!(encode_checkpoint(&h, &loaded).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_are_errors() {
        let nets = SynDiffNets::<f32>::new(small(), &mut seeded(1)).unwrap();
        let bytes = encode_checkpoint(&header(), &nets).unwrap();
        assert!(matches!(
            decode_checkpoint(b"NOTACKPT"),
            Err(Error::Checkpoint(CheckpointError::BadMagic))
        ));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Checkpoint(CheckpointError::Truncated { .. }))
        ));
        let mut other = header();
        other.net.base_channels = 8;
        let bigger = SynDiffNets::<f32>::new(other.net, &mut seeded(1)).unwrap();
        let mut mixed = encode_checkpoint(&header(), &bigger).unwrap();
        assert!(decode_checkpoint(&mixed).is_err());
        mixed.truncate(20);
        assert!(decode_checkpoint(&mixed).is_err());
    }
}
