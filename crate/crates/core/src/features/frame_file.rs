//! `KWSF` matrix files.
//!
//! Layout (little-endian): magic `KWSF`, one version byte (1), `u32` rows T,
//! `u32` columns D, then `T * D` `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::FrameMatrix;
use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"KWSF";
pub const FRAME_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub(crate) fn encode(frames: &FrameMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + frames.as_slice().len() * 4);
    buf.extend_from_slice(FRAME_MAGIC);
    buf.push(FRAME_VERSION);
    buf.extend_from_slice(&(frames.num_frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(frames.dim() as u32).to_le_bytes());
    for v in frames.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub(crate) fn decode(bytes: &[u8], path: &Path) -> Result<FrameMatrix> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != FRAME_MAGIC {
        return Err(bad("missing KWSF header".into()));
    }
    if bytes[4] != FRAME_VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * cols * 4 {
        return Err(bad(format!(
            "header declares {rows} x {cols} but payload holds {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FrameMatrix::new(data, rows, cols).map_err(|e| bad(e.to_string()))
}

pub fn write_frame_file(path: &Path, frames: &FrameMatrix) -> Result<()> {
    fs::write(path, encode(frames)).map_err(|e| Error::io(path, e))
}

pub fn read_frame_file(path: &Path) -> Result<FrameMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
