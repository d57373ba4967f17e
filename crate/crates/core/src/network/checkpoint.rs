//! `KWSM` checkpoints.
//!
//! Layout (little-endian): magic `KWSM`, version byte (1), `u32` output size
//! W, `u32` tensor count, then per tensor a `u32` rank, `rank` x `u32` dims
//! and the `f32` payload in row-major order. Metadata lives in a JSON
//! sidecar at `<checkpoint>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, NetworkParams};
use crate::error::{Error, Result};
use crate::features::Standardizer;

pub const MODEL_MAGIC: &[u8; 4] = b"KWSM";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Scorer kind the model was trained as.
    pub kind: String,
    /// Query-language word for each output unit.
    pub labels: Vec<String>,
    pub vocab_hash: String,
    pub feature_config_hash: String,
    pub config_hash: String,
    pub seed: u64,
    /// Fixed input length used for every utterance.
    pub pad_frames: usize,
    pub standardizer: Option<Standardizer>,
    pub best_epoch: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn encode(params: &NetworkParams<f32>) -> Vec<u8> {
    let shapes = params.arch.tensor_shapes();
    let mut buf = Vec::with_capacity(16 + params.num_parameters() * 4);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.push(MODEL_VERSION);
    buf.extend_from_slice(&(params.outputs() as u32).to_le_bytes());
    buf.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for ((_, shape), data) in shapes.iter().zip(params.tensors()) {
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                message: "truncated checkpoint".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

fn decode(bytes: &[u8], path: &Path) -> Result<NetworkParams<f32>> {
    let fmt_err = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    };
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MODEL_MAGIC {
        return Err(fmt_err("missing KWSM header"));
    }
    if r.take(1)?[0] != MODEL_VERSION {
        return Err(fmt_err("unsupported checkpoint version"));
    }
    let outputs = r.u32()?;
    let count = r.u32()?;
    if count > 64 {
        return Err(fmt_err("implausible tensor count"));
    }
    let mut shapes = Vec::with_capacity(count);
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32()?;
        if rank > 8 {
            return Err(fmt_err("implausible tensor rank"));
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let payload = r.take(n * 4)?;
        tensors.push(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f32>>(),
        );
        shapes.push(shape);
    }
    if r.pos != bytes.len() {
        return Err(fmt_err("trailing bytes after last tensor"));
    }
    let arch = Architecture::from_shapes(&shapes)?;
    if arch.outputs != outputs {
        return Err(fmt_err("output size in header disagrees with tensors"));
    }
    NetworkParams::from_tensors(arch, tensors)
}

pub fn write_checkpoint(path: &Path, params: &NetworkParams<f32>, meta: &CheckpointMeta) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta)? + "\n";
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(NetworkParams<f32>, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode(&bytes, path)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.labels.len() != params.outputs() {
        return Err(Error::Dimension(format!(
            "checkpoint has {} outputs but {} labels",
            params.outputs(),
            meta.labels.len()
        )));
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::super::init_params;
    use super::*;

    fn meta(n: usize) -> CheckpointMeta {
        CheckpointMeta {
            kind: "x_vision_speech_cnn".into(),
            labels: (0..n).map(|i| format!("w{i}")).collect(),
            vocab_hash: "v".into(),
            feature_config_hash: "f".into(),
            config_hash: "c".into(),
            seed: 3,
            pad_frames: 200,
            standardizer: None,
            best_epoch: 1,
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.kwsm");
        let p: NetworkParams<f32> = init_params(Architecture::miniature(3), 1).unwrap();
        write_checkpoint(&path, &p, &meta(3)).unwrap();
        let (q, m) = read_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(m, meta(3));
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"KWSM\x01");
        assert_eq!(&bytes[5..9], &3u32.to_le_bytes());
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let p: NetworkParams<f32> = init_params(Architecture::miniature(2), 1).unwrap();
        let bytes = encode(&p);
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra, Path::new("m")).is_err());
        let mut wrong = bytes;
        wrong[0] = b'X';
        assert!(decode(&wrong, Path::new("m")).is_err());
    }
}
