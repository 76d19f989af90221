//! STCV checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `STCV` |
//! | 4 | version (u32) |
//! | 4 | config length L (u32) |
//! | L | model config, JSON |
//! | per tensor | rank r (u32), r dims (u32 each), f64 values, in parameter declaration order |
//! | 4 | CRC32 of all preceding bytes |
//!
//! Only parameters are stored; optimizer state starts fresh after loading.

use std::path::Path;

use super::{HybridConfig, HybridModel};
use crate::error::{Error, FormatError, Result};

pub const STCV_MAGIC: [u8; 4] = *b"STCV";
pub const STCV_VERSION: u32 = 1;

fn push_u32(out: &mut Vec<u8>, n: usize, what: &str) -> Result<()> {
    let v = u32::try_from(n).map_err(|_| Error::Input(format!("{what} {n} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &HybridModel) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())?;
    let mut out = Vec::with_capacity(16 + config.len() + 8 * model.num_params());
    out.extend_from_slice(&STCV_MAGIC);
    out.extend_from_slice(&STCV_VERSION.to_le_bytes());
    push_u32(&mut out, config.len(), "config length")?;
    out.extend_from_slice(&config);
    for p in model.params() {
        push_u32(&mut out, p.shape.len(), "rank")?;
        for &d in p.shape {
            push_u32(&mut out, d, "dimension")?;
        }
        for v in p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(FormatError::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decode a checkpoint, validating magic, version, checksum and every tensor shape
/// against the shapes implied by the embedded config.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<HybridModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != STCV_MAGIC {
        return Err(FormatError::BadMagic {
            expected: STCV_MAGIC,
            found: magic,
        }
        .into());
    }
    let version = r.u32()?;
    if version != STCV_VERSION {
        return Err(FormatError::BadVersion {
            expected: STCV_VERSION,
            found: version,
        }
        .into());
    }
    // the checksum covers everything, so verify it before trusting any length field
    if bytes.len() < 16 {
        return Err(FormatError::Truncated {
            needed: 16,
            available: bytes.len(),
        }
        .into());
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);

    let config_len = r.u32()? as usize;
    let config_bytes = r.take(config_len)?;
    if stored != computed {
        return Err(FormatError::CrcMismatch { stored, computed }.into());
    }
    let config: HybridConfig =
        serde_json::from_slice(config_bytes).map_err(|e| FormatError::Invalid(format!("config block: {e}")))?;
    let mut model = HybridModel::zeros(&config).map_err(|e| FormatError::Invalid(format!("config block: {e}")))?;

    let mut r = Reader { bytes: body, pos: r.pos };
    for i in 0..model.names.len() {
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        if shape != model.shapes[i] {
            return Err(FormatError::Invalid(format!(
                "tensor `{}` has shape {shape:?}, config implies {:?}",
                model.names[i], model.shapes[i]
            ))
            .into());
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::Invalid(format!("tensor `{}` holds non-finite values", model.names[i])).into());
        }
        model.set_param(i, &values)?;
    }
    if r.pos != body.len() {
        return Err(FormatError::TrailingBytes {
            extra: body.len() - r.pos,
        }
        .into());
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &HybridModel) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HybridModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
