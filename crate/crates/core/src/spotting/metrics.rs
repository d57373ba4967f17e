//! Ranking and detection metrics over score lists.
//!
//! Equal scores always form one block: they are accepted or rejected together
//! by any threshold, so no metric depends on how ties happen to be ordered.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

/// Descending score, ascending id on ties.
pub fn ranking_order<S: AsRef<str>>(scores: &[f64], ids: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| compare_desc(scores[a], scores[b]).then_with(|| ids[a].as_ref().cmp(ids[b].as_ref())));
    order
}

fn compare_desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Fraction of the first `k` ranked items that are relevant. Collections
/// shorter than `k` still divide by `k`.
pub fn precision_at_k(ranked_relevance: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Validation("precision@k needs k >= 1".into()));
    }
    let hits = ranked_relevance.iter().take(k).filter(|&&r| r).count();
    Ok(hits as f64 / k as f64)
}

/// Precision at N, where N is the number of relevant items. `None` if N = 0.
pub fn p_at_n(ranked_relevance: &[bool]) -> Option<f64> {
    let n = ranked_relevance.iter().filter(|&&r| r).count();
    if n == 0 {
        return None;
    }
    let hits = ranked_relevance.iter().take(n).filter(|&&r| r).count();
    Some(hits as f64 / n as f64)
}

/// Runs of equal scores in descending order as (size, relevant count).
fn tie_blocks(scores: &[f64], relevant: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(relevant.iter().copied()).collect();
    pairs.sort_by(|a, b| compare_desc(a.0, b.0));
    let mut blocks: Vec<(f64, usize, usize)> = Vec::new();
    for (s, r) in pairs {
        match blocks.last_mut() {
            Some(last) if last.0 == s => {
                last.1 += 1;
                last.2 += r as usize;
            }
            _ => blocks.push((s, 1, r as usize)),
        }
    }
    blocks
}

fn check_scores(scores: &[f64], relevant: &[bool]) -> Result<()> {
    if scores.len() != relevant.len() {
        return Err(Error::Dimension(format!(
            "{} scores but {} relevance labels",
            scores.len(),
            relevant.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok(())
}

/// Equal error rate of the threshold sweep. The (FAR, FRR) curve is linear
/// within each tie block, so a block of constant scores gives exactly 0.5.
/// `None` when all or none of the items are relevant.
pub fn eer(scores: &[f64], relevant: &[bool]) -> Result<Option<f64>> {
    check_scores(scores, relevant)?;
    let pos = relevant.iter().filter(|&&r| r).count();
    let neg = relevant.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let (pos_f, neg_f) = (pos as f64, neg as f64);
    let mut far_prev = 0.0;
    let mut frr_prev = 1.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, size, hits) in tie_blocks(scores, relevant) {
        tp += hits;
        fp += size - hits;
        let far = fp as f64 / neg_f;
        let frr = (pos - tp) as f64 / pos_f;
        let d = frr - far;
        if d <= 0.0 {
            if d == 0.0 {
                return Ok(Some(far));
            }
            let d_prev = frr_prev - far_prev;
            let t = d_prev / (d_prev - d);
            return Ok(Some(far_prev + t * (far - far_prev)));
        }
        far_prev = far;
        frr_prev = frr;
    }
    unreachable!("the sweep always ends at FAR = 1, FRR = 0")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Pooled average precision: each tie block adds its recall gain times the
/// precision of everything scored at or above it.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Result<(f64, Vec<PrPoint>)> {
    check_scores(scores, relevant)?;
    let total = relevant.iter().filter(|&&r| r).count();
    if total == 0 {
        return Err(Error::Undefined("average precision needs at least one relevant pair".into()));
    }
    let total_f = total as f64;
    let mut ap = 0.0;
    let mut curve = Vec::new();
    let (mut tp, mut n) = (0usize, 0usize);
    for (threshold, size, hits) in tie_blocks(scores, relevant) {
        tp += hits;
        n += size;
        let precision = tp as f64 / n as f64;
        ap += (hits as f64 / total_f) * precision;
        curve.push(PrPoint {
            threshold,
            precision,
            recall: tp as f64 / total_f,
        });
    }
    Ok((ap, curve))
}
