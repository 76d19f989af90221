//! RVID clip container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `RVID` |
//! | 4 | version (u32) |
//! | 12 | T, H, W (u32 each) |
//! | 4 | label (u32) |
//! | 4 | group (u32) |
//! | 8·T·H·W | voxels, f64, row-major |
//! | 4 | CRC32 of all preceding bytes |

use std::path::Path;

use super::VideoClip;
use crate::error::{Error, FormatError, Result};
use crate::tensor::Volume;

pub const RVID_MAGIC: [u8; 4] = *b"RVID";
pub const RVID_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn encode_clip(clip: &VideoClip) -> Result<Vec<u8>> {
    clip.validate()?;
    let v = &clip.voxels;
    let to_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::Input(format!("{what} {n} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * v.data.len() + 4);
    out.extend_from_slice(&RVID_MAGIC);
    out.extend_from_slice(&RVID_VERSION.to_le_bytes());
    for (n, what) in [(v.t, "T"), (v.h, "H"), (v.w, "W"), (clip.label, "label")] {
        out.extend_from_slice(&to_u32(n, what)?.to_le_bytes());
    }
    out.extend_from_slice(&clip.group_id.to_le_bytes());
    for x in &v.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_clip(bytes: &[u8], clip_id: &str) -> Result<VideoClip> {
    let need = |needed: usize| -> Result<()> {
        if bytes.len() < needed {
            Err(FormatError::Truncated {
                needed,
                available: bytes.len(),
            }
            .into())
        } else {
            Ok(())
        }
    };
    need(4)?;
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != RVID_MAGIC {
        return Err(FormatError::BadMagic {
            expected: RVID_MAGIC,
            found: magic,
        }
        .into());
    }
    need(8)?;
    let version = read_u32(bytes, 4);
    if version != RVID_VERSION {
        return Err(FormatError::BadVersion {
            expected: RVID_VERSION,
            found: version,
        }
        .into());
    }
    need(HEADER_LEN)?;
    let (t, h, w) = (
        read_u32(bytes, 8) as usize,
        read_u32(bytes, 12) as usize,
        read_u32(bytes, 16) as usize,
    );
    let label = read_u32(bytes, 20) as usize;
    let group_id = read_u32(bytes, 24);
    let expected = t
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| FormatError::Invalid(format!("dimensions {t}x{h}x{w} overflow")))?;
    need(expected)?;
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            extra: bytes.len() - expected,
        }
        .into());
    }
    let body = &bytes[..expected - 4];
    let stored = read_u32(bytes, expected - 4);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::CrcMismatch { stored, computed }.into());
    }
    let data: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let clip = VideoClip {
        voxels: Volume::from_vec(t, h, w, data)?,
        label,
        clip_id: clip_id.to_string(),
        group_id,
    };
    clip.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(clip)
}

pub fn write_clip(path: impl AsRef<Path>, clip: &VideoClip) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_clip(clip)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a clip; its id is the file stem.
pub fn read_clip(path: impl AsRef<Path>) -> Result<VideoClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_clip(&bytes, &id)
}
