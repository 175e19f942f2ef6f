use serde::{Deserialize, Serialize};

use super::{Grads, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer. Moments follow the network's shape and are
/// zero-padded when the network grows; frozen or masked parameters are
/// skipped, moments included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Grads,
    pub v: Grads,
}

impl Adam {
    pub fn new(config: AdamConfig, net: &Network) -> Self {
        Self { config, step: 0, m: Grads::zeros_like(net), v: Grads::zeros_like(net) }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Grads) -> Result<()> {
        self.m.resize_like(net);
        self.v.resize_like(net);
        if grads.layers.len() != self.m.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            if g == 0.0 && *m == 0.0 && *v == 0.0 {
                return;
            }
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (li, layer) in net.layers_mut().enumerate() {
            let (gl, ml, vl) = (&grads.layers[li], &mut self.m.layers[li], &mut self.v.layers[li]);
            if gl.w.len() != layer.out_width() || gl.b.len() != layer.out_width() {
                return Err(Error::Shape(format!("gradient shape mismatch in layer {li}")));
            }
            for o in 0..layer.active_out() {
                let r = layer.row_slice(o);
                if layer.is_trainable_slice(r) {
                    update(&mut layer.biases[o], gl.b[o], &mut ml.b[o], &mut vl.b[o]);
                }
                for i in layer.row_inputs(o) {
                    if !layer.is_trainable_slice(r.max(layer.col_slice(i))) {
                        continue;
                    }
                    update(&mut layer.weights[o][i], gl.w[o][i], &mut ml.w[o][i], &mut vl.w[o][i]);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, HeadSpec, NetworkSpec};

    fn net() -> Network {
        Network::new(
            NetworkSpec {
                inputs: 1,
                trunk: vec![],
                heads: vec![HeadSpec { hidden: vec![], outputs: 1, activation: Activation::Linear }],
                growth_units: 1,
                max_slices: 2,
                growth_init_scale: 0.1,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut n = net();
        let before = n.flat_params();
        let mut opt = Adam::new(AdamConfig::default(), &n);
        let g = Grads::zeros_like(&n);
        opt.step(&mut n, &g).unwrap();
        assert_eq!(n.flat_params(), before);
    }

    #[test]
    fn quadratic_descends() {
        // minimise (w - 3)^2 + b^2 on the single linear unit
        let mut n = net();
        let mut opt = Adam::new(AdamConfig::default(), &n);
        let loss = |n: &Network| {
            let p = n.flat_params();
            (p[0] - 3.0).powi(2) + p[1].powi(2)
        };
        let mut prev = loss(&n);
        for _ in 0..100 {
            let p = n.flat_params();
            let mut g = Grads::zeros_like(&n);
            g.layers[0].w[0][0] = 2.0 * (p[0] - 3.0);
            g.layers[0].b[0] = 2.0 * p[1];
            opt.step(&mut n, &g).unwrap();
            let l = loss(&n);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn frozen_slice_untouched() {
        let mut n = net();
        n.grow(1).unwrap();
        n.set_frozen(0, true);
        let before = n.flat_params();
        let mut opt = Adam::new(AdamConfig::default(), &n);
        let mut g = Grads::zeros_like(&n);
        g.layers[0].w[0] = vec![1.0, 1.0];
        g.layers[0].b[0] = 1.0;
        opt.step(&mut n, &g).unwrap();
        let after = n.flat_params();
        assert_eq!(after[0], before[0]);
        assert_eq!(after[2], before[2]);
        assert_ne!(after[1], before[1]);
    }
}
