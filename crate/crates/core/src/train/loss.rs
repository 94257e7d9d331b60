//! Training losses with their gradients at the logits.

use crate::error::{Error, Result};
use crate::model::softmax;

const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<G> {
    pub loss: f64,
    pub grad: G,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `sigmoid(logit)` against `labels`, with the
/// probability clamped to `[1e-7, 1 - 1e-7]`. The gradient is with respect
/// to each logit and is zero where the clamp is active.
pub fn bce_loss(logits: &[f64], labels: &[bool]) -> LossOutput<Vec<f64>> {
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let p_raw = sigmoid(z);
        let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let y = if y { 1.0 } else { 0.0 };
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        let clamped = p != p_raw;
        grad.push(if clamped { 0.0 } else { (p - y) / n });
    }
    LossOutput { loss: loss / n, grad }
}

/// Mean softmax cross-entropy; gradient is `(softmax - one_hot) / n`.
pub fn cross_entropy_loss(logits: &[Vec<f64>], labels: &[usize]) -> Result<LossOutput<Vec<Vec<f64>>>> {
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(Error::ShapeMismatch(format!("label {y} for {} classes", z.len())));
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += log_norm - z[y];
        let mut g = softmax(z);
        g[y] -= 1.0;
        g.iter_mut().for_each(|v| *v /= n);
        grad.push(g);
    }
    Ok(LossOutput { loss: loss / n, grad })
}
