use super::real::{matmul, View};
use super::{ForwardTrace, Gradients, NetworkParams, Real};
use crate::error::{Error, Result};

fn column_sums<F: Real>(x: &[F], cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); cols];
    for row in x.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Zeroes gradient entries whose ReLU output was not positive.
fn relu_mask<F: Real>(grad: &mut [F], act: &[F]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if a <= F::zero() {
            *g = F::zero();
        }
    }
}

/// Routes pooled gradients back to the winning rows.
fn unpool<F: Real>(
    grad_pooled: &[F],
    arg: &[u32],
    batch: usize,
    len_in: usize,
    len_out: usize,
    channels: usize,
) -> Vec<F> {
    let mut out = vec![F::zero(); batch * len_in * channels];
    for b in 0..batch {
        for p in 0..len_out {
            for c in 0..channels {
                let i = (b * len_out + p) * channels + c;
                out[(b * len_in + arg[i] as usize) * channels + c] += grad_pooled[i];
            }
        }
    }
    out
}

/// Gradients of the summed cross-entropy, scaled by `loss_scale` and summed
/// over the batch, for the forward pass recorded in `trace`.
///
/// The output-layer local gradient is `loss_scale * (f - target)`.
pub fn backward<F: Real>(
    params: &NetworkParams<F>,
    trace: &ForwardTrace<F>,
    targets: &[&[f32]],
    loss_scale: F,
) -> Result<Gradients<F>> {
    if trace.params_version != params.version || trace.arch != params.arch {
        return Err(Error::Validation(
            "forward trace was recorded with different parameters".into(),
        ));
    }
    if targets.len() != trace.batch {
        return Err(Error::Dimension(format!(
            "{} targets for a batch of {}",
            targets.len(),
            trace.batch
        )));
    }
    let arch = params.arch;
    let (batch, w_out) = (trace.batch, arch.outputs);
    if let Some(t) = targets.iter().find(|t| t.len() != w_out) {
        return Err(Error::Dimension(format!("target length {} != {w_out} outputs", t.len())));
    }
    let p = &params.tensors;
    let mut grads: Vec<Vec<F>> = vec![Vec::new(); 10];

    // Sigmoid + cross-entropy: dl/dlogit = f - y.
    let mut d_logits = Vec::with_capacity(batch * w_out);
    for (b, t) in targets.iter().enumerate() {
        for (j, &y) in t.iter().enumerate() {
            d_logits.push((trace.sigmoid[b * w_out + j] - F::of(f64::from(y))) * loss_scale);
        }
    }

    let h = arch.hidden;
    let mut g_out_w = vec![F::zero(); h * w_out];
    matmul(View::new(&trace.hidden, batch, h).t(), View::new(&d_logits, batch, w_out), &mut g_out_w, false);
    grads[8] = g_out_w;
    grads[9] = column_sums(&d_logits, w_out);

    let mut d_hidden = vec![F::zero(); batch * h];
    matmul(View::new(&d_logits, batch, w_out), View::new(&p[8], h, w_out).t(), &mut d_hidden, false);
    relu_mask(&mut d_hidden, &trace.hidden);

    let f3 = arch.convs[2].filters;
    let mut g_hid_w = vec![F::zero(); f3 * h];
    matmul(View::new(&trace.pooled, batch, f3).t(), View::new(&d_hidden, batch, h), &mut g_hid_w, false);
    grads[6] = g_hid_w;
    grads[7] = column_sums(&d_hidden, h);

    let mut d_pooled = vec![F::zero(); batch * f3];
    matmul(View::new(&d_hidden, batch, h), View::new(&p[6], f3, h).t(), &mut d_pooled, false);

    let lens = trace.lengths;
    let mut d_act = unpool(&d_pooled, &trace.global_arg, batch, lens.conv[2], 1, f3);

    for i in (0..3).rev() {
        let spec = arch.convs[i];
        let channels_in = arch.input_channels(i);
        let len_out = lens.conv[i];
        let rows = batch * len_out;
        let k = spec.width * channels_in;
        relu_mask(&mut d_act, &trace.acts[i]);

        let mut g_w = vec![F::zero(); k * spec.filters];
        matmul(View::new(&trace.cols[i], rows, k).t(), View::new(&d_act, rows, spec.filters), &mut g_w, false);
        grads[2 * i] = g_w;
        grads[2 * i + 1] = column_sums(&d_act, spec.filters);

        if i == 0 {
            break;
        }
        // Input gradient: fold the unfolded-column gradient back onto frames.
        let mut d_cols = vec![F::zero(); rows * k];
        matmul(View::new(&d_act, rows, spec.filters), View::new(&p[2 * i], k, spec.filters).t(), &mut d_cols, false);
        let len_in = lens.pool[i - 1];
        let mut d_in = vec![F::zero(); batch * len_in * channels_in];
        for b in 0..batch {
            let ex = &mut d_in[b * len_in * channels_in..(b + 1) * len_in * channels_in];
            for t in 0..len_out {
                let row = &d_cols[(b * len_out + t) * k..(b * len_out + t + 1) * k];
                for (dst, &g) in ex[t * channels_in..t * channels_in + k].iter_mut().zip(row) {
                    *dst += g;
                }
            }
        }
        d_act = unpool(&d_in, &trace.pool_arg[i - 1], batch, lens.conv[i - 1], len_in, channels_in);
    }

    Ok(Gradients { tensors: grads })
}
