use serde::{Deserialize, Serialize};

use super::{Activation, Grads, Network};
use crate::{Error, Result};

/// Probabilities are clamped to this before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the true classes over the batch.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows vs {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| Error::Shape(format!("label {y} outside {} classes", row.len())))?;
        total -= p.max(LOG_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

/// `(1/S)·Σ (ŷ − y)²` over every entry.
pub fn mse(pred: &[f64], target: &[f64], batch: usize) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), target.len())));
    }
    if batch == 0 {
        return Err(Error::Shape("batch size must be >= 1".into()));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / batch as f64)
}

pub fn multitask_loss(l_ce: f64, l_mse: f64, xi: f64) -> f64 {
    l_ce + xi * l_mse
}

/// Supervision for one head of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeadTarget {
    /// Class index for a softmax head (cross-entropy).
    Class(usize),
    /// Regression targets for the head's leading outputs (squared error,
    /// weighted by `xi`).
    Values(Vec<f64>),
}

/// Batch losses and gradients of `L = L_ce + xi·L_mse`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub ce: f64,
    pub mse: f64,
    pub total: f64,
    /// Unaveraged per-sample `ce + xi·se`.
    pub per_sample: Vec<f64>,
    pub grads: Grads,
}

/// Forward and backward over a batch. `targets[k][h]` supervises head `h`
/// of sample `k`.
pub fn batch_backward(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<HeadTarget>],
    xi: f64,
) -> Result<BatchLoss> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Shape(format!("{} inputs vs {} targets", inputs.len(), targets.len())));
    }
    let s = inputs.len() as f64;
    let mut grads = Grads::zeros_like(net);
    let mut per_sample = Vec::with_capacity(inputs.len());
    let (mut ce, mut se) = (0.0, 0.0);
    for (x, tgt) in inputs.iter().zip(targets) {
        if tgt.len() != net.heads.len() {
            return Err(Error::Shape("one target per head is required".into()));
        }
        let fwd = net.forward(x)?;
        let mut head_dz = Vec::with_capacity(tgt.len());
        let mut sample = 0.0;
        for (h, t) in tgt.iter().enumerate() {
            let out = &fwd.heads[h];
            let act = net.heads[h].last().unwrap().activation;
            let mut dz = vec![0.0; out.len()];
            match (t, act) {
                (HeadTarget::Class(y), Activation::Softmax) => {
                    let valid = net.head_valid[h].min(out.len());
                    if *y >= valid {
                        return Err(Error::Shape(format!("label {y} outside {valid} valid classes")));
                    }
                    let l = -out[*y].max(LOG_FLOOR).ln();
                    ce += l;
                    sample += l;
                    for k in 0..valid {
                        dz[k] = (out[k] - if k == *y { 1.0 } else { 0.0 }) / s;
                    }
                }
                (HeadTarget::Values(v), Activation::Sigmoid | Activation::Linear) => {
                    if v.len() > out.len() {
                        return Err(Error::Shape("more regression targets than outputs".into()));
                    }
                    for (k, &y) in v.iter().enumerate() {
                        let e = out[k] - y;
                        se += e * e;
                        sample += xi * e * e;
                        let da = xi * 2.0 * e / s;
                        dz[k] = if act == Activation::Sigmoid { da * out[k] * (1.0 - out[k]) } else { da };
                    }
                }
                _ => return Err(Error::Shape(format!("target {t:?} does not fit a {act:?} head"))),
            }
            head_dz.push(dz);
        }
        net.backward(&fwd, &head_dz, &mut grads)?;
        per_sample.push(sample);
    }
    let (ce, mse) = (ce / s, se / s);
    Ok(BatchLoss { ce, mse, total: multitask_loss(ce, mse, xi), per_sample, grads })
}
