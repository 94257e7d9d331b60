use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward};
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::train::loss::{bce_loss, cross_entropy_loss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Binary presence loss on a two-logit head: `p = sigmoid(z1 - z0)`.
    Bce,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub weight: f64,
    pub reduction: Reduction,
}

impl LossSpec {
    pub fn mean(kind: LossKind) -> Self {
        LossSpec {
            kind,
            weight: 1.0,
            reduction: Reduction::Mean,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradientOutput {
    pub loss: f64,
    pub grads: ModelParams,
    pub logits: Vec<Vec<f64>>,
}

/// Loss and exact gradients over a batch of `(input, target)` pairs.
///
/// Samples are processed in parallel; their gradients are summed in batch
/// order so the result does not depend on the thread count.
pub fn model_gradients(
    batch: &[(ArrayView2<f64>, usize)],
    params: &ModelParams,
    config: &ModelConfig,
    loss: &LossSpec,
) -> Result<GradientOutput> {
    let mut grads = params.zeros_like();
    let (total, logits) = accumulate_gradients(batch, params, config, loss, &mut grads)?;
    Ok(GradientOutput {
        loss: total,
        grads,
        logits,
    })
}

/// Adds the batch gradient into `acc`, one sample at a time in batch order,
/// and returns the batch loss and logits. Splitting a batch into consecutive
/// parts accumulated into the same `acc` gives a bitwise identical result
/// when the reduction is a sum.
pub fn accumulate_gradients(
    batch: &[(ArrayView2<f64>, usize)],
    params: &ModelParams,
    config: &ModelConfig,
    loss: &LossSpec,
    acc: &mut ModelParams,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient batch".into()));
    }
    let scale = match loss.reduction {
        Reduction::Mean => loss.weight / batch.len() as f64,
        Reduction::Sum => loss.weight,
    };
    let per_sample: Vec<Result<(f64, Vec<f64>, ModelParams)>> = batch
        .par_iter()
        .map(|(input, target)| {
            let trace = forward(*input, params, config)?;
            let z = &trace.logits;
            let (l, mut dlogits) = match loss.kind {
                LossKind::Bce => {
                    if z.len() != 2 {
                        return Err(Error::ShapeMismatch("binary loss needs a two-logit head".into()));
                    }
                    let out = bce_loss(&[z[1] - z[0]], &[*target == 1]);
                    (out.loss, vec![-out.grad[0], out.grad[0]])
                }
                LossKind::CrossEntropy => {
                    let out = cross_entropy_loss(std::slice::from_ref(z), &[*target])?;
                    (out.loss, out.grad.into_iter().next().unwrap())
                }
            };
            dlogits.iter_mut().for_each(|g| *g *= scale);
            let grads = backward(&trace, &dlogits, params, config);
            Ok((l * scale, trace.logits, grads))
        })
        .collect();

    let mut total = 0.0;
    let mut logits = Vec::with_capacity(batch.len());
    for r in per_sample {
        let (l, z, g) = r?;
        total += l;
        acc.add_scaled(&g, 1.0);
        logits.push(z);
    }
    if let Some(name) = acc.first_non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    Ok((total, logits))
}

/// Logits for every input, evaluated in parallel and returned in input order.
pub fn batch_logits(inputs: &[ArrayView2<f64>], params: &ModelParams, config: &ModelConfig) -> Result<Vec<Vec<f64>>> {
    inputs
        .par_iter()
        .map(|x| forward(*x, params, config).map(|t| t.logits))
        .collect()
}
