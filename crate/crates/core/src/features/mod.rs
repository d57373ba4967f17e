//! Acoustic front-end: MFCCs, derivative appending and length normalization.

mod deltas;
mod frame_file;
mod mfcc;
mod standardize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use deltas::append_deltas;
pub use frame_file::{read_frame_file, write_frame_file, FRAME_MAGIC, FRAME_VERSION};
pub use mfcc::{extract_mfcc, frame_count, mel_filterbank};
pub use standardize::Standardizer;

pub const NUM_CEPSTRA: usize = 13;
pub const FEATURE_DIM: usize = 3 * NUM_CEPSTRA;

/// Frames of 8 s of speech at a 10 ms hop.
pub const MAX_FRAMES: usize = 800;

/// A `T x D` matrix of acoustic frames, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    data: Vec<f32>,
    num_frames: usize,
    dim: usize,
}

impl FrameMatrix {
    pub fn new(data: Vec<f32>, num_frames: usize, dim: usize) -> Result<Self> {
        if data.len() != num_frames * dim {
            return Err(Error::Dimension(format!(
                "{} values cannot form a {num_frames} x {dim} frame matrix",
                data.len()
            )));
        }
        if dim == 0 {
            return Err(Error::Dimension("frame dimension must be positive".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame matrix".into()));
        }
        Ok(Self {
            data,
            num_frames,
            dim,
        })
    }

    pub fn zeros(num_frames: usize, dim: usize) -> Self {
        Self {
            data: vec![0.0; num_frames * dim],
            num_frames,
            dim,
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("ragged frame rows".into()));
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Seconds.
    pub window_length: f64,
    /// Seconds.
    pub hop_length: f64,
    pub num_mel_filters: usize,
    pub num_cepstra: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
    pub delta_window: usize,
    /// Zero-mean, unit-variance scaling per dimension with train-split statistics.
    pub standardize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_length: 0.025,
            hop_length: 0.010,
            num_mel_filters: 23,
            num_cepstra: NUM_CEPSTRA,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
            delta_window: 2,
            standardize: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_length > 0.0 && self.window_length > self.hop_length) {
            return Err(Error::Validation(
                "feature config needs window_length > hop_length > 0".into(),
            ));
        }
        if self.num_cepstra > self.num_mel_filters {
            return Err(Error::Validation(
                "num_cepstra cannot exceed num_mel_filters".into(),
            ));
        }
        if self.sample_rate == 0 || self.num_cepstra == 0 {
            return Err(Error::Validation(
                "sample_rate and num_cepstra must be positive".into(),
            ));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Validation("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_length * f64::from(self.sample_rate)).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_length * f64::from(self.sample_rate)).round() as usize
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.hop_length
    }
}

/// Truncates to `max_frames` or zero-pads up to `min_frames`.
pub fn fit_length(frames: &FrameMatrix, max_frames: usize, min_frames: usize) -> FrameMatrix {
    debug_assert!(max_frames >= min_frames);
    let dim = frames.dim;
    if frames.num_frames > max_frames {
        FrameMatrix {
            data: frames.data[..max_frames * dim].to_vec(),
            num_frames: max_frames,
            dim,
        }
    } else if frames.num_frames < min_frames {
        let mut data = frames.data.clone();
        data.resize(min_frames * dim, 0.0);
        FrameMatrix {
            data,
            num_frames: min_frames,
            dim,
        }
    } else {
        frames.clone()
    }
}

/// Full front-end for one waveform: MFCCs followed by deltas.
pub fn featurize(waveform: &[f32], config: &FeatureConfig) -> Result<FrameMatrix> {
    let mfcc = extract_mfcc(waveform, config)?;
    append_deltas(&mfcc, config.delta_window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(t: usize, d: usize) -> FrameMatrix {
        let data = (0..t * d).map(|i| i as f32).collect();
        FrameMatrix::new(data, t, d).unwrap()
    }

    #[test]
    fn truncates_to_max() {
        let x = ramp(900, 39);
        let y = fit_length(&x, 800, 134);
        assert_eq!(y.num_frames(), 800);
        assert_eq!(y.as_slice(), &x.as_slice()[..800 * 39]);
    }

    #[test]
    fn at_max_is_identity() {
        let x = ramp(800, 39);
        assert_eq!(fit_length(&x, 800, 134), x);
    }

    #[test]
    fn pads_short_input_with_zero_rows() {
        let x = ramp(50, 39);
        let y = fit_length(&x, 800, 134);
        assert_eq!(y.num_frames(), 134);
        assert_eq!(&y.as_slice()[..50 * 39], x.as_slice());
        assert!(y.as_slice()[50 * 39..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_finite_frames() {
        assert!(matches!(
            FrameMatrix::new(vec![f32::NAN], 1, 1),
            Err(Error::NonFinite(_))
        ));
    }

    proptest! {
        #[test]
        fn fit_length_is_idempotent(t in 1usize..300, lo in 1usize..150, extra in 0usize..150) {
            let hi = lo + extra;
            let x = ramp(t, 3);
            let once = fit_length(&x, hi, lo);
            prop_assert_eq!(fit_length(&once, hi, lo), once);
        }
    }
}
