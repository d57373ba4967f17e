use super::real::{matmul, View};
use super::{Architecture, LayerLengths, NetworkParams, Real};
use crate::error::{Error, Result};
use crate::features::FrameMatrix;

/// Activations cached by [`forward_batch`] for [`super::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub(super) arch: Architecture,
    pub(super) params_version: u64,
    pub(super) batch: usize,
    pub(super) lengths: LayerLengths,
    /// Unfolded conv inputs, `batch * conv_len x width * in_channels`.
    pub(super) cols: [Vec<F>; 3],
    /// Post-ReLU conv outputs, `batch * conv_len x filters`.
    pub(super) acts: [Vec<F>; 3],
    /// Winning row (within its example) for each pooled value.
    pub(super) pool_arg: [Vec<u32>; 2],
    /// Winning row of the max over time, `batch x filters3`.
    pub(super) global_arg: Vec<u32>,
    pub(super) pooled: Vec<F>,
    pub(super) hidden: Vec<F>,
    /// Raw sigmoid outputs, `batch x outputs`.
    pub(super) sigmoid: Vec<F>,
}

impl<F: Real> ForwardTrace<F> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn lengths(&self) -> LayerLengths {
        self.lengths
    }

    /// Scores per example, held strictly inside `(0, 1)`.
    pub fn scores(&self) -> Vec<Vec<F>> {
        let lo = F::min_positive_value();
        let hi = F::one() - F::epsilon() / F::of(2.0);
        self.sigmoid
            .chunks_exact(self.arch.outputs)
            .map(|row| row.iter().map(|&s| s.max(lo).min(hi)).collect())
            .collect()
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Copies every `width`-frame window of each example into one row.
/// Rows of the input are contiguous, so a window is a contiguous run.
fn unfold<F: Real>(input: &[F], batch: usize, len_in: usize, channels: usize, width: usize) -> Vec<F> {
    let len_out = len_in - width + 1;
    let k = width * channels;
    let mut cols = Vec::with_capacity(batch * len_out * k);
    for b in 0..batch {
        let ex = &input[b * len_in * channels..(b + 1) * len_in * channels];
        for t in 0..len_out {
            cols.extend_from_slice(&ex[t * channels..t * channels + k]);
        }
    }
    cols
}

/// `relu(cols * weight + bias)`.
fn conv_relu<F: Real>(cols: &[F], rows: usize, k: usize, weight: &[F], bias: &[F]) -> Vec<F> {
    let filters = bias.len();
    let mut out = Vec::with_capacity(rows * filters);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    matmul(View::new(cols, rows, k), View::new(weight, k, filters), &mut out, true);
    for v in &mut out {
        *v = v.max(F::zero());
    }
    out
}

/// Non-overlapping max over `pool` rows; ties go to the earliest row.
fn max_pool<F: Real>(x: &[F], batch: usize, len: usize, channels: usize, pool: usize) -> (Vec<F>, Vec<u32>) {
    let out_len = len / pool;
    let mut out = Vec::with_capacity(batch * out_len * channels);
    let mut arg = Vec::with_capacity(batch * out_len * channels);
    for b in 0..batch {
        for p in 0..out_len {
            for c in 0..channels {
                let mut best_row = p * pool;
                let mut best = x[(b * len + best_row) * channels + c];
                for r in p * pool + 1..(p + 1) * pool {
                    let v = x[(b * len + r) * channels + c];
                    if v > best {
                        best = v;
                        best_row = r;
                    }
                }
                out.push(best);
                arg.push(best_row as u32);
            }
        }
    }
    (out, arg)
}

fn dense<F: Real>(x: &[F], rows: usize, weight: &[F], bias: &[F]) -> Vec<F> {
    let n_out = bias.len();
    let n_in = weight.len() / n_out;
    let mut out = Vec::with_capacity(rows * n_out);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    matmul(View::new(x, rows, n_in), View::new(weight, n_in, n_out), &mut out, true);
    out
}

/// Runs a batch of equal-length inputs through the network.
pub fn forward_batch<F: Real>(params: &NetworkParams<F>, inputs: &[&FrameMatrix]) -> Result<ForwardTrace<F>> {
    let arch = params.arch;
    let batch = inputs.len();
    let first = inputs
        .first()
        .ok_or_else(|| Error::Validation("forward needs at least one input".into()))?;
    let t_in = first.num_frames();
    for x in inputs {
        if x.dim() != arch.input_dim {
            return Err(Error::Dimension(format!(
                "network expects {}-dim frames, got {}",
                arch.input_dim,
                x.dim()
            )));
        }
        if x.num_frames() != t_in {
            return Err(Error::Dimension("batch members must have equal length".into()));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
    }
    let lengths = arch.lengths(t_in).ok_or(Error::TooShort {
        got: t_in,
        min: arch.min_input_frames(),
    })?;

    let mut input = Vec::with_capacity(batch * t_in * arch.input_dim);
    for x in inputs {
        input.extend(x.as_slice().iter().map(|&v| F::of(f64::from(v))));
    }

    let p = &params.tensors;
    let mut cols: [Vec<F>; 3] = Default::default();
    let mut acts: [Vec<F>; 3] = Default::default();
    let mut pool_arg: [Vec<u32>; 2] = Default::default();

    let mut layer_in = input;
    let mut len_in = t_in;
    let mut channels = arch.input_dim;
    for i in 0..3 {
        let spec = arch.convs[i];
        let len_out = lengths.conv[i];
        cols[i] = unfold(&layer_in, batch, len_in, channels, spec.width);
        acts[i] = conv_relu(&cols[i], batch * len_out, spec.width * channels, &p[2 * i], &p[2 * i + 1]);
        channels = spec.filters;
        if i < 2 {
            let (pooled, arg) = max_pool(&acts[i], batch, len_out, channels, arch.pool);
            pool_arg[i] = arg;
            layer_in = pooled;
            len_in = lengths.pool[i];
        }
    }

    let l3 = lengths.conv[2];
    let (pooled, global_arg) = max_pool(&acts[2], batch, l3, channels, l3);
    let mut hidden = dense(&pooled, batch, &p[6], &p[7]);
    for v in &mut hidden {
        *v = v.max(F::zero());
    }
    let mut out = dense(&hidden, batch, &p[8], &p[9]);
    for v in &mut out {
        *v = sigmoid(*v);
    }

    Ok(ForwardTrace {
        arch,
        params_version: params.version,
        batch,
        lengths,
        cols,
        acts,
        pool_arg,
        global_arg,
        pooled,
        hidden,
        sigmoid: out,
    })
}

/// Scores for one utterance, each in `(0, 1)`.
pub fn forward<F: Real>(params: &NetworkParams<F>, frames: &FrameMatrix) -> Result<(Vec<F>, ForwardTrace<F>)> {
    let trace = forward_batch(params, &[frames])?;
    let scores = trace.scores().swap_remove(0);
    Ok((scores, trace))
}

#[cfg(test)]
mod tests {
    use super::super::init_params;
    use super::*;

    fn input(t: usize, seed: u32) -> FrameMatrix {
        let data = (0..t * 39)
            .map(|i| ((i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed) % 1000) as f32 / 500.0 - 1.0)
            .collect();
        FrameMatrix::new(data, t, 39).unwrap()
    }

    #[test]
    fn full_network_lengths_and_outputs() {
        let params: NetworkParams<f32> = init_params(Architecture::full(7), 1).unwrap();
        let (scores, trace) = forward(&params, &input(800, 1)).unwrap();
        assert_eq!(trace.lengths().conv, [792, 255, 75]);
        assert_eq!(trace.lengths().pool, [264, 85]);
        assert_eq!(trace.pooled.len(), 1024);
        assert_eq!(trace.hidden.len(), 3000);
        assert_eq!(scores.len(), 7);
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn minimum_length_is_enforced() {
        let params: NetworkParams<f64> = init_params(Architecture::miniature(3), 1).unwrap();
        assert_eq!(forward(&params, &input(134, 2)).unwrap().1.lengths().conv[2], 1);
        assert!(forward(&params, &input(200, 2)).is_ok());
        assert!(matches!(
            forward(&params, &input(133, 2)),
            Err(Error::TooShort { got: 133, min: 134 })
        ));
    }

    #[test]
    fn saturated_scores_stay_open_interval() {
        let mut params: NetworkParams<f32> = init_params(Architecture::miniature(2), 1).unwrap();
        params.tensors_mut()[9] = vec![1e4, -1e4];
        let (scores, _) = forward(&params, &input(140, 3)).unwrap();
        assert!(scores[0] < 1.0 && scores[1] > 0.0);
    }

    #[test]
    fn batch_matches_single_examples() {
        let params: NetworkParams<f64> = init_params(Architecture::miniature(3), 5).unwrap();
        let (a, b) = (input(150, 1), input(150, 2));
        let batch = forward_batch(&params, &[&a, &b]).unwrap().scores();
        assert_eq!(batch[0], forward(&params, &a).unwrap().0);
        assert_eq!(batch[1], forward(&params, &b).unwrap().0);
        assert_eq!(forward(&params, &a).unwrap().0, forward(&params, &a).unwrap().0);
    }

    #[test]
    fn pooling_ties_pick_earliest_row() {
        let x = [1.0f64, 5.0, 5.0, 2.0, 2.0, 2.0];
        let (out, arg) = max_pool(&x, 1, 6, 1, 3);
        assert_eq!(out, [5.0, 2.0]);
        assert_eq!(arg, [1, 3]);
    }
}
