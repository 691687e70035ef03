//! Model checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! "MFUS"  u16 version
//! u32 d  u32 S  u32 reduction  u32 hidden  u8 aff_enabled
//! 8 x { u32 rows  u32 cols  f64[rows * cols] }   w1 b1 w2 b2 w3 b3 w4 b4
//! ```
//!
//! Weights are row-major; biases are stored as `len x 1`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ArchConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MFUS";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let arch = &params.arch;
    let mut buf = Vec::with_capacity(64 + 8 * params.num_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [arch.d, arch.spatial, arch.reduction, arch.hidden] {
        buf.extend_from_slice(&to_u32(v)?.to_le_bytes());
    }
    buf.push(u8::from(arch.aff_enabled));
    for ((rows, cols), tensor) in params.shapes().into_iter().zip(params.tensors()) {
        buf.extend_from_slice(&to_u32(rows)?.to_le_bytes());
        buf.extend_from_slice(&to_u32(cols)?.to_le_bytes());
        for v in tensor {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Decodes a checkpoint; `origin` only labels errors.
pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<ModelParams> {
    let mut r = Reader {
        bytes,
        pos: 0,
        origin,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: origin.to_path_buf(),
            expected: "MFUS",
        });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version.into(),
            supported: CHECKPOINT_VERSION.into(),
        });
    }
    let d = r.u32()? as usize;
    let spatial = r.u32()? as usize;
    let reduction = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let aff_enabled = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(r.malformed(format!("aff flag must be 0 or 1, found {other}"))),
    };
    let arch = ArchConfig {
        d,
        spatial,
        reduction,
        hidden,
        aff_enabled,
    };
    let mut params = ModelParams::zeros(arch)?;
    let shapes = params.shapes();
    for ((rows, cols), tensor) in shapes.into_iter().zip(params.tensors_mut()) {
        let found = (r.u32()? as usize, r.u32()? as usize);
        if found != (rows, cols) {
            return Err(Error::ShapeInconsistent(format!(
                "checkpoint tensor is {}x{}, architecture needs {rows}x{cols}",
                found.0, found.1
            )));
        }
        let raw = r.take(8 * rows * cols)?;
        for (v, chunk) in tensor.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::AlreadyExists(path.to_path_buf()));
    }
    fs::write(path, encode_checkpoint(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_checkpoint(&bytes, path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(self.malformed(format!("needed {n} bytes at offset {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn malformed(&self, reason: String) -> Error {
        Error::Truncated {
            path: self.origin.to_path_buf(),
            reason,
        }
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{v} does not fit in u32")))
}
