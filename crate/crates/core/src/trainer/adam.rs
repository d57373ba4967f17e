use super::TrainConfig;
use crate::error::{Error, Result};
use crate::network::{Gradients, NetworkParams, Real};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new<T>(shapes: &[Vec<T>]) -> Self {
        let zeros: Vec<Vec<F>> = shapes.iter().map(|t| vec![F::zero(); t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn for_params(params: &NetworkParams<F>) -> Self {
        Self::new(params.tensors())
    }
}

/// One bias-corrected Adam update over raw tensors. `names` label tensors in errors.
pub fn adam_update<F: Real>(
    params: &mut [Vec<F>],
    grads: &[Vec<F>],
    names: &[&str],
    state: &mut AdamState<F>,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension("parameter, gradient and moment tensors differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let name = names.get(i).copied().unwrap_or("tensor");
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::Dimension(format!("gradient shape mismatch in {name}")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (F::of(config.beta1), F::of(config.beta2));
    let correct1 = F::one() - b1.powi(t);
    let correct2 = F::one() - b2.powi(t);
    let (lr, eps) = (F::of(config.learning_rate), F::of(config.epsilon));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (F::one() - b1) * gj;
            v[j] = b2 * v[j] + (F::one() - b2) * gj * gj;
            let m_hat = m[j] / correct1;
            let v_hat = v[j] / correct2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

pub fn adam_step<F: Real>(
    params: &mut NetworkParams<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    config: &TrainConfig,
) -> Result<()> {
    let shapes = params.architecture().tensor_shapes();
    let names: Vec<&str> = shapes.iter().map(|(n, _)| *n).collect();
    adam_update(params.tensors_mut(), &grads.tensors, &names, state, config)
}
