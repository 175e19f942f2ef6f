//! Dense networks with sliced, growable layers and analytic gradients.
//!
//! Everything is `f64`. A [`Network`] is a shared trunk followed by one or
//! more heads; each layer is a [`DenseLayer`] whose units are split into a
//! base slice and per-growth slices so that capacity can be added, frozen
//! and masked without touching the existing function.

mod checkpoint;
mod layer;
mod loss;
mod network;
mod optim;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_params, save_params, Checkpoint, CHECKPOINT_VERSION};
pub use layer::{DenseLayer, LayerGrads, Layout};
pub use loss::{batch_backward, cross_entropy, mse, multitask_loss, BatchLoss, HeadTarget, LOG_FLOOR};
pub use network::{Forward, Grads, HeadSpec, Network, NetworkSpec};
pub use optim::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    /// Element-wise activation; softmax is handled per layer.
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear | Activation::Softmax => z,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of `z` written into `out`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_bounded() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
