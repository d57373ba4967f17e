use super::Real;
use crate::error::{Error, Result};

/// Scores are clamped to `[eps, 1 - eps]` before taking logs.
pub const LOSS_EPSILON: f64 = 1e-12;

/// Summed binary cross-entropy over all outputs:
/// `-sum_w [y_w ln f_w + (1 - y_w) ln(1 - f_w)]`, evaluated in `f64`.
pub fn loss<F: Real>(scores: &[F], target: &[f32]) -> Result<f64> {
    if scores.len() != target.len() {
        return Err(Error::Dimension(format!(
            "{} scores against a {}-dim target",
            scores.len(),
            target.len()
        )));
    }
    Ok(scores
        .iter()
        .zip(target)
        .map(|(&f, &y)| {
            let f = f.f64().clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
            let y = f64::from(y);
            -(y * f.ln() + (1.0 - y) * (1.0 - f).ln())
        })
        .sum())
}
