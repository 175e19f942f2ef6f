use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, LayerGrads, Layout};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    /// Widths of the head's hidden (ReLU) layers.
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input width of the base slice.
    pub inputs: usize,
    /// Widths of the shared (ReLU) layers.
    pub trunk: Vec<usize>,
    pub heads: Vec<HeadSpec>,
    /// Units added to every hidden layer per growth step.
    pub growth_units: usize,
    /// Upper bound on the number of slices, base included.
    pub max_slices: usize,
    /// Scale applied to the initialisation of grown parameters.
    pub growth_init_scale: f64,
}

/// Per-layer buffers in network order: trunk first, then each head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    pub layers: Vec<LayerGrads>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Self { layers: net.layers().map(LayerGrads::zeros_like).collect() }
    }

    pub fn resize_like(&mut self, net: &Network) {
        let layers: Vec<&DenseLayer> = net.layers().collect();
        self.layers.truncate(layers.len());
        for (g, l) in self.layers.iter_mut().zip(&layers) {
            g.resize_like(l);
        }
        for l in &layers[self.layers.len()..] {
            self.layers.push(LayerGrads::zeros_like(l));
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    /// Weights row-major then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            for row in &l.w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&l.b);
        }
        out
    }
}

/// Output of one forward pass plus what backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub heads: Vec<Vec<f64>>,
    /// Input of every layer, in network order.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer, in network order.
    pre: Vec<Vec<f64>>,
}

impl Forward {
    /// Pre-activations of every layer, trunk first, then each head in order.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub trunk: Vec<DenseLayer>,
    pub heads: Vec<Vec<DenseLayer>>,
    /// Number of leading outputs a softmax head normalises over.
    pub head_valid: Vec<usize>,
    growth_seed: u64,
    growths: u64,
}

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        if spec.inputs == 0 || spec.heads.is_empty() || spec.max_slices == 0 {
            return Err(Error::Shape("network needs inputs, a head and at least one slice".into()));
        }
        if spec.trunk.iter().chain(spec.heads.iter().flat_map(|h| &h.hidden)).any(|&w| w == 0)
            || spec.heads.iter().any(|h| h.outputs == 0)
        {
            return Err(Error::Shape("layer widths must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = spec.inputs;
        let mut trunk = Vec::new();
        for &w in &spec.trunk {
            trunk.push(DenseLayer::new(width, w, Activation::Relu, Layout::Progressive, &mut rng));
            width = w;
        }
        let mut heads = Vec::new();
        for h in &spec.heads {
            let mut layers = Vec::new();
            let mut hw = width;
            for &w in &h.hidden {
                layers.push(DenseLayer::new(hw, w, Activation::Relu, Layout::Progressive, &mut rng));
                hw = w;
            }
            layers.push(DenseLayer::new(hw, h.outputs, h.activation, Layout::Readout, &mut rng));
            heads.push(layers);
        }
        let head_valid = spec.heads.iter().map(|h| h.outputs).collect();
        Ok(Self { spec, trunk, heads, head_valid, growth_seed: seed ^ 0x9e37_79b9_7f4a_7c15, growths: 0 })
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flatten())
    }

    pub fn input_width(&self) -> usize {
        self.layers().next().map_or(0, DenseLayer::in_width)
    }

    pub fn slices(&self) -> usize {
        self.layers().next().map_or(1, DenseLayer::slices)
    }

    pub fn active_slices(&self) -> usize {
        self.layers().next().map_or(1, |l| l.active_slices)
    }

    pub fn set_active_slices(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Forbidden("the base slice cannot be masked".into()));
        }
        if k > self.slices() {
            return Err(Error::Shape(format!("{k} active slices, {} built", self.slices())));
        }
        for l in self.layers_mut() {
            l.set_active_slices(k)?;
        }
        Ok(())
    }

    /// Masks slice `s` (and everything above it) in every layer.
    pub fn mask_slice(&mut self, s: usize) -> Result<()> {
        if s == 0 {
            return Err(Error::Forbidden("the base slice cannot be masked".into()));
        }
        if s >= self.slices() {
            return Err(Error::Shape(format!("slice {s} does not exist")));
        }
        self.set_active_slices(self.active_slices().min(s))
    }

    pub fn set_frozen(&mut self, slice: usize, frozen: bool) {
        for l in self.layers_mut() {
            if let Some(f) = l.frozen.get_mut(slice) {
                *f = frozen;
            }
        }
    }

    pub fn frozen(&self) -> Vec<bool> {
        self.layers().next().map(|l| l.frozen.clone()).unwrap_or_default()
    }

    /// Adds one slice everywhere: `growth_units` units per hidden layer and
    /// `extra_inputs` new network inputs. The new slice becomes active.
    pub fn grow(&mut self, extra_inputs: usize) -> Result<()> {
        if self.slices() >= self.spec.max_slices {
            return Err(Error::Capacity(format!(
                "network already has the maximum of {} slices",
                self.spec.max_slices
            )));
        }
        if self.active_slices() != self.slices() {
            return Err(Error::Forbidden("unmask every slice before growing".into()));
        }
        let g = self.spec.growth_units;
        let scale = self.spec.growth_init_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(self.growth_seed.wrapping_add(self.growths));
        self.growths += 1;
        let mut extra = extra_inputs;
        for l in &mut self.trunk {
            l.grow(g, extra, scale, &mut rng)?;
            extra = g;
        }
        for head in &mut self.heads {
            let mut e = extra;
            let last = head.len() - 1;
            for (idx, l) in head.iter_mut().enumerate() {
                let rows = if idx == last { 0 } else { g };
                l.grow(rows, e, scale, &mut rng)?;
                e = rows;
            }
        }
        let k = self.slices();
        self.set_active_slices(k)
    }

    /// Forward pass on one input of length [`Network::input_width`].
    pub fn forward(&self, input: &[f64]) -> Result<Forward> {
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        let mut x = input.to_vec();
        for l in &self.trunk {
            let z = l.pre_activation(&x)?;
            let a = l.activate(&z, usize::MAX);
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        let mut heads = Vec::with_capacity(self.heads.len());
        for (h, layers) in self.heads.iter().enumerate() {
            let mut hx = x.clone();
            let last = layers.len() - 1;
            for (idx, l) in layers.iter().enumerate() {
                let valid = if idx == last { self.head_valid[h] } else { usize::MAX };
                let z = l.pre_activation(&hx)?;
                let a = l.activate(&z, valid);
                inputs.push(std::mem::replace(&mut hx, a));
                pre.push(z);
            }
            heads.push(hx);
        }
        Ok(Forward { heads, inputs, pre })
    }

    /// Backpropagates `head_dz[h] = dL/dz` of each head's output layer
    /// (pre-activation) and accumulates into `grads`.
    pub fn backward(&self, fwd: &Forward, head_dz: &[Vec<f64>], grads: &mut Grads) -> Result<()> {
        let n_layers = self.trunk.len() + self.heads.iter().map(Vec::len).sum::<usize>();
        if fwd.inputs.len() != n_layers || grads.layers.len() != n_layers {
            return Err(Error::MissingCache("forward cache does not match the network".into()));
        }
        if self.layers().zip(&fwd.inputs).any(|(l, x)| l.in_width() != x.len()) {
            return Err(Error::MissingCache("forward cache predates the last growth".into()));
        }
        if head_dz.len() != self.heads.len() {
            return Err(Error::Shape(format!("{} head gradients for {} heads", head_dz.len(), self.heads.len())));
        }
        let trunk_out = self.trunk.last().map_or(self.input_width(), DenseLayer::out_width);
        let mut d_trunk = vec![0.0; trunk_out];
        let mut offset = self.trunk.len();
        for (h, layers) in self.heads.iter().enumerate() {
            let last = layers.len() - 1;
            if head_dz[h].len() != layers[last].out_width() {
                return Err(Error::Shape("head gradient width mismatch".into()));
            }
            let mut dz = head_dz[h].clone();
            for idx in (0..layers.len()).rev() {
                let li = offset + idx;
                let dx = layers[idx].backward(&fwd.inputs[li], &dz, &mut grads.layers[li]);
                if idx > 0 {
                    dz = relu_grad(&dx, &fwd.pre[li - 1]);
                } else {
                    for (a, b) in d_trunk.iter_mut().zip(&dx) {
                        *a += b;
                    }
                }
            }
            offset += layers.len();
        }
        let mut da = d_trunk;
        for idx in (0..self.trunk.len()).rev() {
            let dz = relu_grad(&da, &fwd.pre[idx]);
            da = self.trunk[idx].backward(&fwd.inputs[idx], &dz, &mut grads.layers[idx]);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.out_width() * (l.in_width() + 1)).sum()
    }

    /// Parameters in [`Grads::flatten`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            for row in &l.weights {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!("{} parameters for {}", params.len(), self.param_count())));
        }
        let mut it = params.iter().copied();
        for l in self.layers_mut() {
            for row in &mut l.weights {
                for w in row.iter_mut() {
                    *w = it.next().unwrap();
                }
            }
            for b in &mut l.biases {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }
}

fn relu_grad(da: &[f64], z: &[f64]) -> Vec<f64> {
    da.iter().zip(z).map(|(&d, &z)| if z > 0.0 { d } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> NetworkSpec {
        NetworkSpec {
            inputs: 4,
            trunk: vec![6, 5],
            heads: vec![
                HeadSpec { hidden: vec![3], outputs: 4, activation: Activation::Softmax },
                HeadSpec { hidden: vec![3], outputs: 1, activation: Activation::Sigmoid },
            ],
            growth_units: 2,
            max_slices: 3,
            growth_init_scale: 0.1,
        }
    }

    #[test]
    fn heads_are_normalised() {
        let net = Network::new(spec(), 1).unwrap();
        let f = net.forward(&[0.1, 0.5, -0.3, 0.9]).unwrap();
        assert!((f.heads[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(f.heads[1][0] > 0.0 && f.heads[1][0] < 1.0);
    }

    #[test]
    fn growth_preserves_old_function_when_masked() {
        let mut net = Network::new(spec(), 2).unwrap();
        let x = [0.1, 0.5, -0.3, 0.9];
        let before = net.forward(&x).unwrap().heads;
        net.grow(1).unwrap();
        assert_eq!(net.input_width(), 5);
        assert_eq!(net.trunk[0].row_bounds, vec![0, 6, 8]);
        net.mask_slice(1).unwrap();
        assert_eq!(net.forward(&[0.1, 0.5, -0.3, 0.9, 3.0]).unwrap().heads, before);
        net.grow(1).unwrap_err();
        net.set_active_slices(2).unwrap();
        net.grow(1).unwrap();
        assert!(matches!(net.grow(1), Err(Error::Capacity(_))));
    }

    #[test]
    fn flat_round_trip() {
        let mut net = Network::new(spec(), 3).unwrap();
        let p = net.flat_params();
        assert_eq!(p.len(), net.param_count());
        let q: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        net.set_flat_params(&q).unwrap();
        assert_eq!(net.flat_params(), q);
    }

    #[test]
    fn missing_cache_detected() {
        let mut net = Network::new(spec(), 4).unwrap();
        let f = net.forward(&[0.0; 4]).unwrap();
        net.grow(1).unwrap();
        let mut g = Grads::zeros_like(&net);
        let dz = vec![vec![0.0; 4], vec![0.0]];
        assert!(matches!(net.backward(&f, &dz, &mut g), Err(Error::MissingCache(_))));
        let mut short = f.clone();
        short.inputs.pop();
        assert!(matches!(net.backward(&short, &dz, &mut g), Err(Error::MissingCache(_))));
    }
}
