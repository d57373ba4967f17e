use serde::{Deserialize, Serialize};

use super::FrameMatrix;
use crate::error::{Error, Result};

/// Per-dimension affine normalization estimated on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(frames: impl IntoIterator<Item = &'a FrameMatrix>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for m in frames {
            if sum.is_empty() {
                sum = vec![0.0; m.dim()];
                sq = vec![0.0; m.dim()];
            } else if m.dim() != sum.len() {
                return Err(Error::Dimension("frame dims differ across corpus".into()));
            }
            for row in m.rows() {
                for (d, &v) in row.iter().enumerate() {
                    sum[d] += f64::from(v);
                    sq[d] += f64::from(v) * f64::from(v);
                }
            }
            count += m.num_frames();
        }
        if count == 0 {
            return Err(Error::Validation("no frames to estimate statistics from".into()));
        }
        let n = count as f64;
        let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
        let std = sum
            .iter()
            .zip(&sq)
            .map(|(s, q)| {
                let mu = s / n;
                ((q / n - mu * mu).max(0.0).sqrt().max(1e-8)) as f32
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, frames: &FrameMatrix) -> Result<FrameMatrix> {
        if frames.dim() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "standardizer is {}-dim, frames are {}-dim",
                self.mean.len(),
                frames.dim()
            )));
        }
        let mut out = frames.clone();
        let dim = out.dim();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let d = i % dim;
            *v = (*v - self.mean[d]) / self.std[d];
        }
        Ok(out)
    }
}
