use super::{FrameMatrix, NUM_CEPSTRA};
use crate::error::{Error, Result};

/// Regression deltas over `+-window` frames with edge replication.
fn regression(x: &[f32], frames: usize, dim: usize, window: usize) -> Vec<f32> {
    let denom: f32 = 2.0 * (1..=window).map(|n| (n * n) as f32).sum::<f32>();
    let last = frames as isize - 1;
    let at = |t: isize, d: usize| x[t.clamp(0, last) as usize * dim + d];
    let mut out = vec![0.0; frames * dim];
    for t in 0..frames as isize {
        for d in 0..dim {
            let mut acc = 0.0;
            for n in 1..=window as isize {
                acc += n as f32 * (at(t + n, d) - at(t - n, d));
            }
            out[t as usize * dim + d] = acc / denom;
        }
    }
    out
}

/// Extends 13-dim MFCC frames to `[static | delta | delta-delta]`.
pub fn append_deltas(mfcc: &FrameMatrix, window: usize) -> Result<FrameMatrix> {
    if mfcc.dim() != NUM_CEPSTRA {
        return Err(Error::Dimension(format!(
            "deltas expect {NUM_CEPSTRA}-dim frames, got {}",
            mfcc.dim()
        )));
    }
    if window == 0 {
        return Err(Error::Validation("delta window must be at least 1".into()));
    }
    let (t, d) = (mfcc.num_frames(), mfcc.dim());
    let delta = regression(mfcc.as_slice(), t, d, window);
    let delta2 = regression(&delta, t, d, window);
    let mut data = Vec::with_capacity(t * 3 * d);
    for i in 0..t {
        data.extend_from_slice(mfcc.row(i));
        data.extend_from_slice(&delta[i * d..(i + 1) * d]);
        data.extend_from_slice(&delta2[i * d..(i + 1) * d]);
    }
    FrameMatrix::new(data, t, 3 * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_input_has_zero_derivatives() {
        let x = FrameMatrix::new(vec![1.5; 20 * 13], 20, 13).unwrap();
        let y = append_deltas(&x, 2).unwrap();
        assert_eq!(y.dim(), 39);
        for row in y.rows() {
            assert!(row[13..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_frame_has_zero_derivatives() {
        let x = FrameMatrix::new((0..13).map(|i| i as f32).collect(), 1, 13).unwrap();
        let y = append_deltas(&x, 2).unwrap();
        assert!(y.row(0)[13..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_has_constant_delta_in_interior() {
        // c3 = t. Interior delta = sum n*(2n) / (2 * sum n^2) = 1, delta-delta = 0.
        let t = 12;
        let mut data = vec![0.0; t * 13];
        for i in 0..t {
            data[i * 13 + 3] = i as f32;
        }
        let y = append_deltas(&FrameMatrix::new(data, t, 13).unwrap(), 2).unwrap();
        for i in 2..t - 2 {
            assert!((y.row(i)[13 + 3] - 1.0).abs() < 1e-6);
        }
        for i in 4..t - 4 {
            assert!(y.row(i)[26 + 3].abs() < 1e-6);
        }
        // Edge replication: at t=0 the left neighbours equal x[0].
        // (1*(1-0) + 2*(2-0)) / 10 = 0.5
        assert!((y.row(0)[16] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let x = FrameMatrix::zeros(5, 39);
        assert!(matches!(append_deltas(&x, 2), Err(Error::Dimension(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn shift_equivariant_away_from_edges(
            values in proptest::collection::vec(-3.0f32..3.0, 30 * 13),
            k in 1usize..6,
        ) {
            let t = 30;
            let x = FrameMatrix::new(values.clone(), t, 13).unwrap();
            // Prepend k copies of arbitrary rows: shifts the sequence by k frames.
            let mut shifted_data = values[..k * 13].to_vec();
            shifted_data.extend_from_slice(&values);
            let shifted = FrameMatrix::new(shifted_data, t + k, 13).unwrap();
            let a = append_deltas(&x, 2).unwrap();
            let b = append_deltas(&shifted, 2).unwrap();
            // Delta-delta reaches 4 frames; stay clear of both edges.
            for i in 4..t - 4 {
                for (u, v) in a.row(i).iter().zip(b.row(i + k)) {
                    prop_assert!((u - v).abs() < 1e-5);
                }
            }
        }
    }
}
