//! Softmax, cross-entropy and their fused gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to probabilities before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// `σ(z)_i = exp(z_i − max z) / Σ_j exp(z_j − max z)`.
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("softmax input contains {bad}")));
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&z| (z as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / total) as f32).collect())
}

/// `−Σ_k p_k · ln(max(q_k, ε))`.
pub fn cross_entropy(q: &[f32], p: &[f32]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::shape(format!(
            "prediction has {} classes, target has {}",
            q.len(),
            p.len()
        )));
    }
    Ok(-q
        .iter()
        .zip(p)
        .filter(|(_, &pk)| pk != 0.0)
        .map(|(&qk, &pk)| pk as f64 * (qk as f64).max(LOG_FLOOR).ln())
        .sum::<f64>())
}

/// Gradient of `cross_entropy(softmax(z), p)` with respect to `z`: `softmax(z) − p`.
pub fn softmax_xent_grad(logits: &[f32], p: &[f32]) -> Result<Vec<f32>> {
    if logits.len() != p.len() {
        return Err(Error::shape(format!(
            "logits have {} classes, target has {}",
            logits.len(),
            p.len()
        )));
    }
    let q = softmax(logits)?;
    Ok(q.iter().zip(p).map(|(qk, pk)| qk - pk).collect())
}

/// Mean-reduced loss over a `[batch, K]` block plus the logit gradient,
/// scaled so that it is the gradient of `Σ loss_i / divisor`.
///
/// `divisor` is normally the batch size; gradient accumulation passes the
/// size of the full batch a micro-batch belongs to.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// Mean loss over this block's rows.
    pub mean: f64,
    pub per_example: Vec<f64>,
    pub grad: Tensor,
}

pub fn softmax_cross_entropy_batch(logits: &Tensor, targets: &Tensor, divisor: usize) -> Result<BatchLoss> {
    if logits.rank() != 2 || logits.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "logits {:?} and targets {:?} must both be [batch, K]",
            logits.shape(),
            targets.shape()
        )));
    }
    if divisor == 0 {
        return Err(Error::config("loss divisor must be positive"));
    }
    let k = logits.shape()[1];
    let inv = 1.0 / divisor as f32;
    let mut grad = Vec::with_capacity(logits.len());
    let mut per_example = Vec::with_capacity(logits.shape()[0]);
    for (z, p) in logits.data().chunks_exact(k).zip(targets.data().chunks_exact(k)) {
        let q = softmax(z)?;
        per_example.push(cross_entropy(&q, p)?);
        grad.extend(q.iter().zip(p).map(|(qk, pk)| (qk - pk) * inv));
    }
    let mean = per_example.iter().sum::<f64>() / per_example.len() as f64;
    Ok(BatchLoss {
        mean,
        per_example,
        grad: Tensor::from_vec(logits.shape(), grad)?,
    })
}

/// Row-wise softmax of a `[batch, K]` logit block.
pub fn softmax_rows(logits: &Tensor) -> Result<Vec<Vec<f32>>> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!("expected [batch, K] logits, got {:?}", logits.shape())));
    }
    logits.data().chunks_exact(logits.shape()[1]).map(softmax).collect()
}

pub fn one_hot(class: usize, num_classes: usize) -> Vec<f32> {
    let mut v = vec![0.0; num_classes];
    v[class] = 1.0;
    v
}

pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
