use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::{Error, Result};

/// How row slices connect to column slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Row slice `r` reads column slices `0..=r`. Growth appends rows.
    Progressive,
    /// All rows belong to the base slice and read every active column
    /// slice. Growth appends columns only.
    Readout,
}

/// Dense layer whose units are partitioned into a base slice and growth
/// slices.
///
/// Weight `(o, i)` belongs to slice `max(row_slice(o), col_slice(i))` and a
/// bias to its row's slice. Parameters of slices at or above
/// `active_slices` are skipped entirely, so masking reproduces the smaller
/// layer bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `out × in`; unconnected entries stay zero.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
    pub layout: Layout,
    /// Row offsets, one more entry than slices.
    pub row_bounds: Vec<usize>,
    /// Column offsets, one more entry than slices.
    pub col_bounds: Vec<usize>,
    pub active_slices: usize,
    /// Per-slice frozen flags, honoured by the optimizer.
    pub frozen: Vec<bool>,
}

/// Gradient (or moment) buffers with the same shape as a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            w: vec![vec![0.0; layer.in_width()]; layer.out_width()],
            b: vec![0.0; layer.out_width()],
        }
    }

    /// Pads with zeros to the layer's current shape, keeping existing values.
    pub fn resize_like(&mut self, layer: &DenseLayer) {
        let (out, inp) = (layer.out_width(), layer.in_width());
        for row in &mut self.w {
            row.resize(inp, 0.0);
        }
        self.w.resize(out, vec![0.0; inp]);
        self.b.resize(out, 0.0);
    }

    pub fn add_assign(&mut self, other: &LayerGrads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += y;
        }
    }
}

fn he_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, scale: f64) -> f64 {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt();
    scale * rng.gen_range(-limit..=limit)
}

fn slice_of(bounds: &[usize], idx: usize) -> usize {
    // bounds[s] <= idx < bounds[s + 1]; empty slices are skipped
    bounds[1..].iter().position(|&b| idx < b).unwrap_or(bounds.len() - 2)
}

impl DenseLayer {
    /// Single-slice layer with He-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        layout: Layout,
        rng: &mut R,
    ) -> Self {
        let weights = (0..outputs)
            .map(|_| (0..inputs).map(|_| he_uniform(rng, inputs, 1.0)).collect())
            .collect();
        Self {
            weights,
            biases: vec![0.0; outputs],
            activation,
            layout,
            row_bounds: vec![0, outputs],
            col_bounds: vec![0, inputs],
            active_slices: 1,
            frozen: vec![false],
        }
    }

    pub fn slices(&self) -> usize {
        self.row_bounds.len() - 1
    }

    pub fn in_width(&self) -> usize {
        *self.col_bounds.last().unwrap()
    }

    pub fn out_width(&self) -> usize {
        *self.row_bounds.last().unwrap()
    }

    pub fn active_in(&self) -> usize {
        self.col_bounds[self.active_slices]
    }

    pub fn active_out(&self) -> usize {
        self.row_bounds[self.active_slices]
    }

    pub fn row_slice(&self, o: usize) -> usize {
        slice_of(&self.row_bounds, o)
    }

    pub fn col_slice(&self, i: usize) -> usize {
        slice_of(&self.col_bounds, i)
    }

    /// Columns read by row `o`, as an index range.
    pub fn row_inputs(&self, o: usize) -> std::ops::Range<usize> {
        match self.layout {
            Layout::Readout => 0..self.active_in(),
            Layout::Progressive => {
                let r = self.row_slice(o);
                0..self.col_bounds[(r + 1).min(self.active_slices)]
            }
        }
    }

    /// Slice that owns weight `(o, i)`.
    pub fn weight_owner(&self, o: usize, i: usize) -> usize {
        self.row_slice(o).max(self.col_slice(i))
    }

    pub fn is_trainable_slice(&self, s: usize) -> bool {
        s < self.active_slices && !self.frozen[s]
    }

    /// `w·x + b` on active rows; inactive rows are zero.
    pub fn pre_activation(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_width() {
            return Err(Error::Shape(format!(
                "layer expects {} inputs, got {}",
                self.in_width(),
                input.len()
            )));
        }
        let mut z = vec![0.0; self.out_width()];
        for (o, zo) in z.iter_mut().enumerate().take(self.active_out()) {
            let row = &self.weights[o];
            let mut acc = self.biases[o];
            for i in self.row_inputs(o) {
                acc += row[i] * input[i];
            }
            *zo = acc;
        }
        Ok(z)
    }

    /// Applies the activation to active rows. Softmax covers only the first
    /// `valid` active rows; the rest get probability zero.
    pub fn activate(&self, z: &[f64], valid: usize) -> Vec<f64> {
        let n = self.active_out();
        let mut a = vec![0.0; z.len()];
        match self.activation {
            Activation::Softmax => {
                let k = valid.min(n);
                super::softmax_into(&z[..k], &mut a[..k]);
            }
            act => {
                for o in 0..n {
                    a[o] = act.apply(z[o]);
                }
            }
        }
        a
    }

    pub fn forward(&self, input: &[f64], valid: usize) -> Result<Vec<f64>> {
        Ok(self.activate(&self.pre_activation(input)?, valid))
    }

    /// Accumulates `dL/dW`, `dL/db` from `dz = dL/dz` and returns `dL/dx`.
    pub fn backward(&self, input: &[f64], dz: &[f64], grads: &mut LayerGrads) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_width()];
        for o in 0..self.active_out() {
            let d = dz[o];
            if d == 0.0 {
                continue;
            }
            grads.b[o] += d;
            let row = &self.weights[o];
            let grow = &mut grads.w[o];
            for i in self.row_inputs(o) {
                grow[i] += d * input[i];
                dx[i] += row[i] * d;
            }
        }
        dx
    }

    /// Appends one slice: `extra_rows` new units (must be 0 for a readout
    /// layer) and `extra_cols` new inputs. New connections are He-uniform
    /// scaled by `init_scale`; existing connections are untouched.
    pub fn grow<R: Rng + ?Sized>(
        &mut self,
        extra_rows: usize,
        extra_cols: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<()> {
        if self.layout == Layout::Readout && extra_rows != 0 {
            return Err(Error::Shape("readout layers grow columns only".into()));
        }
        let old_in = self.in_width();
        let new_in = old_in + extra_cols;
        let fan_in = new_in;
        for row in &mut self.weights {
            row.resize(new_in, 0.0);
        }
        if self.layout == Layout::Readout {
            for row in &mut self.weights {
                for w in &mut row[old_in..] {
                    *w = he_uniform(rng, fan_in, init_scale);
                }
            }
        }
        for _ in 0..extra_rows {
            self.weights.push((0..new_in).map(|_| he_uniform(rng, fan_in, init_scale)).collect());
            self.biases.push(0.0);
        }
        let out = self.out_width() + extra_rows;
        self.row_bounds.push(out);
        self.col_bounds.push(new_in);
        self.frozen.push(false);
        Ok(())
    }

    /// Deactivates slice `s` and every slice above it. The base slice cannot
    /// be masked.
    pub fn mask_slice(&mut self, s: usize) -> Result<()> {
        if s == 0 {
            return Err(Error::Forbidden("the base slice cannot be masked".into()));
        }
        if s >= self.slices() {
            return Err(Error::Shape(format!("slice {s} does not exist")));
        }
        self.active_slices = self.active_slices.min(s);
        Ok(())
    }

    pub fn set_active_slices(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Forbidden("the base slice cannot be masked".into()));
        }
        if k > self.slices() {
            return Err(Error::Shape(format!("{k} active slices, {} built", self.slices())));
        }
        self.active_slices = k;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_map() {
        let mut l = DenseLayer::new(3, 4, Activation::Relu, Layout::Progressive, &mut rng());
        l.weights.iter_mut().for_each(|r| r.iter_mut().for_each(|w| *w = 0.0));
        assert_eq!(l.forward(&[1.0, -2.0, 3.0], 4).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn identity_echo() {
        let mut l = DenseLayer::new(3, 3, Activation::Linear, Layout::Progressive, &mut rng());
        for (o, row) in l.weights.iter_mut().enumerate() {
            for (i, w) in row.iter_mut().enumerate() {
                *w = if i == o { 1.0 } else { 0.0 };
            }
        }
        let x = [0.3, -1.5, 2.25];
        assert_eq!(l.forward(&x, 3).unwrap(), x.to_vec());
    }

    #[test]
    fn softmax_equal_logits() {
        let mut l = DenseLayer::new(2, 4, Activation::Softmax, Layout::Readout, &mut rng());
        l.weights.iter_mut().for_each(|r| r.iter_mut().for_each(|w| *w = 0.0));
        assert_eq!(l.forward(&[1.0, 1.0], 4).unwrap(), vec![0.25; 4]);
        let masked = l.forward(&[1.0, 1.0], 2).unwrap();
        assert_eq!(masked, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let l = DenseLayer::new(3, 2, Activation::Relu, Layout::Progressive, &mut rng());
        assert!(matches!(l.forward(&[1.0], 2), Err(Error::Shape(_))));
    }

    #[test]
    fn growth_adds_slice_and_keeps_base_rows() {
        let mut r = rng();
        let mut l = DenseLayer::new(3, 4, Activation::Relu, Layout::Progressive, &mut r);
        let x = [0.5, -0.2, 0.9];
        let before = l.forward(&x, 4).unwrap();
        l.grow(16, 2, 0.1, &mut r).unwrap();
        l.set_active_slices(2).unwrap();
        assert_eq!(l.row_bounds, vec![0, 4, 20]);
        assert_eq!(l.col_bounds, vec![0, 3, 5]);
        let after = l.forward(&[0.5, -0.2, 0.9, 1.0, -1.0], 20).unwrap();
        assert_eq!(&after[..4], &before[..]);
        l.mask_slice(1).unwrap();
        let masked = l.forward(&[0.5, -0.2, 0.9, 7.0, 7.0], 20).unwrap();
        assert_eq!(&masked[..4], &before[..]);
        assert!(masked[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn readout_masking_is_exact() {
        let mut r = rng();
        let mut l = DenseLayer::new(3, 2, Activation::Linear, Layout::Readout, &mut r);
        let before = l.forward(&[0.1, 0.2, 0.3], 2).unwrap();
        l.grow(0, 4, 0.1, &mut r).unwrap();
        assert!(l.grow(1, 1, 0.1, &mut r).is_err());
        l.set_active_slices(2).unwrap();
        let grown = l.forward(&[0.1, 0.2, 0.3, 1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_ne!(grown, before);
        l.mask_slice(1).unwrap();
        assert_eq!(l.forward(&[0.1, 0.2, 0.3, 1.0, 1.0, 1.0, 1.0], 2).unwrap(), before);
    }

    #[test]
    fn base_slice_mask_forbidden() {
        let mut l = DenseLayer::new(2, 2, Activation::Relu, Layout::Progressive, &mut rng());
        assert!(matches!(l.mask_slice(0), Err(Error::Forbidden(_))));
        assert!(matches!(l.set_active_slices(0), Err(Error::Forbidden(_))));
    }

    #[test]
    fn masked_rows_get_no_gradient() {
        let mut r = rng();
        let mut l = DenseLayer::new(2, 2, Activation::Linear, Layout::Progressive, &mut r);
        l.grow(2, 1, 0.1, &mut r).unwrap();
        l.set_active_slices(1).unwrap();
        let mut g = LayerGrads::zeros_like(&l);
        let dx = l.backward(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0, 1.0], &mut g);
        assert_eq!(dx[2], 0.0);
        assert!(g.w[2..].iter().all(|row| row.iter().all(|&v| v == 0.0)));
        assert!(g.w[0][2] == 0.0 && g.b[2] == 0.0);
    }
}
