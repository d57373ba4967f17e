//! The speech network `f(X)`: three valid 1-D ReLU convolutions with
//! non-overlapping max pooling, global max pooling over time, a ReLU hidden
//! layer and a sigmoid output with one unit per vocabulary word.
//!
//! ```text
//! conv(64 x 9) -> relu -> pool 3 -> conv(256 x 10) -> relu -> pool 3
//!   -> conv(1024 x 11) -> relu -> max over time -> dense 3000 -> relu
//!   -> dense W -> sigmoid
//! ```
//!
//! Convolutions have stride 1 and no padding (`L - width + 1`); pooling has
//! stride equal to its width and drops leftover frames (`floor(L / 3)`).

mod backward;
mod checkpoint;
mod forward;
mod loss;
mod real;

use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::seed;

pub use backward::backward;
pub use checkpoint::{read_checkpoint, sidecar_path, write_checkpoint, CheckpointMeta, MODEL_MAGIC, MODEL_VERSION};
pub use forward::{forward, forward_batch, ForwardTrace};
pub use loss::{loss, LOSS_EPSILON};
pub use real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub width: usize,
}

/// Layer sizes. Only the widths of the channels and hidden layer vary;
/// kernel widths and pooling follow the fixed layer sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub convs: [ConvSpec; 3],
    pub pool: usize,
    pub hidden: usize,
    pub outputs: usize,
}

/// Per-layer sequence lengths for one input length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLengths {
    pub input: usize,
    pub conv: [usize; 3],
    pub pool: [usize; 2],
}

impl Architecture {
    pub fn full(outputs: usize) -> Self {
        Self {
            input_dim: FEATURE_DIM,
            convs: [
                ConvSpec { filters: 64, width: 9 },
                ConvSpec { filters: 256, width: 10 },
                ConvSpec { filters: 1024, width: 11 },
            ],
            pool: 3,
            hidden: 3000,
            outputs,
        }
    }

    /// Same kernel widths and pooling as [`Architecture::full`] with tiny
    /// channel counts, for finite-difference checks.
    pub fn miniature(outputs: usize) -> Self {
        Self {
            convs: [
                ConvSpec { filters: 4, width: 9 },
                ConvSpec { filters: 5, width: 10 },
                ConvSpec { filters: 6, width: 11 },
            ],
            hidden: 7,
            ..Self::full(outputs)
        }
    }

    pub fn with_outputs(self, outputs: usize) -> Self {
        Self { outputs, ..self }
    }

    pub fn lengths(&self, input: usize) -> Option<LayerLengths> {
        let conv = |len: usize, w: usize| (len >= w).then(|| len - w + 1);
        let c1 = conv(input, self.convs[0].width)?;
        let p1 = c1 / self.pool;
        let c2 = conv(p1, self.convs[1].width)?;
        let p2 = c2 / self.pool;
        let c3 = conv(p2, self.convs[2].width)?;
        Some(LayerLengths {
            input,
            conv: [c1, c2, c3],
            pool: [p1, p2],
        })
    }

    /// Shortest input for which the last convolution has at least one output.
    pub fn min_input_frames(&self) -> usize {
        // Work backwards from one final conv output.
        let mut len = self.convs[2].width;
        len = len * self.pool + self.convs[1].width - 1;
        len * self.pool + self.convs[0].width - 1
    }

    fn input_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.convs[layer - 1].filters
        }
    }

    /// Names and shapes of all parameter tensors, in storage order.
    /// Conv weights are `[width, in_channels, filters]`; dense weights `[in, out]`.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let c = &self.convs;
        vec![
            ("conv1.weight", vec![c[0].width, self.input_channels(0), c[0].filters]),
            ("conv1.bias", vec![c[0].filters]),
            ("conv2.weight", vec![c[1].width, self.input_channels(1), c[1].filters]),
            ("conv2.bias", vec![c[1].filters]),
            ("conv3.weight", vec![c[2].width, self.input_channels(2), c[2].filters]),
            ("conv3.bias", vec![c[2].filters]),
            ("hidden.weight", vec![c[2].filters, self.hidden]),
            ("hidden.bias", vec![self.hidden]),
            ("output.weight", vec![self.hidden, self.outputs]),
            ("output.bias", vec![self.outputs]),
        ]
    }

    fn from_shapes(shapes: &[Vec<usize>]) -> Result<Self> {
        let bad = || Error::Dimension("tensor shapes do not describe a speech network".into());
        if shapes.len() != 10 {
            return Err(bad());
        }
        let conv = |i: usize| -> Result<ConvSpec> {
            match shapes[2 * i].as_slice() {
                [w, _, f] => Ok(ConvSpec { filters: *f, width: *w }),
                _ => Err(bad()),
            }
        };
        let arch = Self {
            input_dim: *shapes[0].get(1).ok_or_else(bad)?,
            convs: [conv(0)?, conv(1)?, conv(2)?],
            pool: 3,
            hidden: *shapes[7].first().ok_or_else(bad)?,
            outputs: *shapes[9].first().ok_or_else(bad)?,
        };
        let expected: Vec<Vec<usize>> = arch.tensor_shapes().into_iter().map(|(_, s)| s).collect();
        if expected != shapes {
            return Err(bad());
        }
        Ok(arch)
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// All weights and biases. Every mutable borrow stamps a fresh version so
/// that traces from older parameter values are detected as stale.
#[derive(Debug, Clone)]
pub struct NetworkParams<F> {
    arch: Architecture,
    tensors: Vec<Vec<F>>,
    version: u64,
}

impl<F: PartialEq> PartialEq for NetworkParams<F> {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.tensors == other.tensors
    }
}

impl<F: Real> NetworkParams<F> {
    pub fn from_tensors(arch: Architecture, tensors: Vec<Vec<F>>) -> Result<Self> {
        let shapes = arch.tensor_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::Dimension(format!("expected {} tensors", shapes.len())));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            let n: usize = shape.iter().product();
            if t.len() != n {
                return Err(Error::Dimension(format!("{name} has {} values, expected {n}", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite((*name).to_string()));
            }
        }
        Ok(Self {
            arch,
            tensors,
            version: next_version(),
        })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let tensors = arch
            .tensor_shapes()
            .iter()
            .map(|(_, s)| vec![F::zero(); s.iter().product()])
            .collect();
        Self {
            arch,
            tensors,
            version: next_version(),
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn outputs(&self) -> usize {
        self.arch.outputs
    }

    pub fn tensors(&self) -> &[Vec<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Vec<F>] {
        self.version = next_version();
        &mut self.tensors
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn cast<G: Real>(&self) -> NetworkParams<G> {
        NetworkParams {
            arch: self.arch,
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|v| G::of(v.f64())).collect())
                .collect(),
            version: next_version(),
        }
    }
}

/// Glorot-uniform initialization: weights `U(-a, a)` with
/// `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn init_params<F: Real>(arch: Architecture, seed: u64) -> Result<NetworkParams<F>> {
    if arch.outputs == 0 {
        return Err(Error::Validation("network needs at least one output".into()));
    }
    let mut rng = seed::rng(seed);
    let tensors = arch
        .tensor_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            if name.ends_with(".bias") {
                return vec![F::zero(); n];
            }
            let fan_in: usize = shape[..shape.len() - 1].iter().product();
            let fan_out = n / shape[shape.len() - 2];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            (0..n).map(|_| F::of(dist.sample(&mut rng))).collect()
        })
        .collect();
    NetworkParams::from_tensors(arch, tensors)
}

/// Gradient of the loss with respect to every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub tensors: Vec<Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(params: &NetworkParams<F>) -> Self {
        Self {
            tensors: params.tensors.iter().map(|t| vec![F::zero(); t.len()]).collect(),
        }
    }
}
