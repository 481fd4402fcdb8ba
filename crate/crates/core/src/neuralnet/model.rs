use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Dense, DenseGrad};
use super::tensor::Matrix;
use crate::error::{Error, Result};

/// Layer widths of a Q-network:
/// `input -> [stem] -> blocks x residual(block_depth) -> head... -> output`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    /// ReLU layer ahead of the residual blocks; without it blocks run at the input width.
    pub stem: Option<usize>,
    pub blocks: usize,
    /// Dense layers inside each residual block.
    pub block_depth: usize,
    /// ReLU layers after the blocks.
    pub head: Vec<usize>,
    /// Identity-activated output layer.
    pub output: usize,
}

impl Architecture {
    /// 32-wide stem, five residual blocks, two 128-wide layers, two outputs.
    pub fn resnet(input: usize) -> Self {
        Self { input, stem: Some(32), blocks: 5, block_depth: 1, head: vec![128, 128], output: 2 }
    }

    /// Same trunk with the residual blocks removed.
    pub fn fully_connected(input: usize) -> Self {
        Self { blocks: 0, ..Self::resnet(input) }
    }

    /// Single affine map from input to outputs.
    pub fn linear(input: usize, output: usize) -> Self {
        Self { input, stem: None, blocks: 0, block_depth: 1, head: vec![], output }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = std::iter::once(self.input)
            .chain(self.stem)
            .chain(self.head.iter().copied())
            .chain(std::iter::once(self.output));
        if widths.into_iter().any(|w| w == 0) {
            return Err(Error::config("architecture", "every width must be positive"));
        }
        if self.blocks > 0 && self.block_depth == 0 {
            return Err(Error::config("architecture", "residual blocks need at least one layer"));
        }
        Ok(())
    }

    /// `(input, output, activation)` of every dense layer in evaluation order.
    fn layer_shapes(&self) -> Vec<(usize, usize, Activation)> {
        let mut shapes = Vec::new();
        let mut width = self.input;
        if let Some(s) = self.stem {
            shapes.push((width, s, Activation::Relu));
            width = s;
        }
        for _ in 0..self.blocks * self.block_depth {
            shapes.push((width, width, Activation::Relu));
        }
        for &h in &self.head {
            shapes.push((width, h, Activation::Relu));
            width = h;
        }
        shapes.push((width, self.output, Activation::Identity));
        shapes
    }

    fn first_block_layer(&self) -> usize {
        usize::from(self.stem.is_some())
    }
}

/// Parameters of a Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    layers: Vec<Dense>,
    acts: Vec<Activation>,
}

/// Intermediate values of one forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    arch: Architecture,
    /// Input of each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
    pub output: Matrix,
}

impl Trace {
    /// Pre-activation of every dense layer, in evaluation order.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseGrad>,
    pub input: Matrix,
}

impl Gradients {
    /// Parameter gradients in [`Model::flat_params`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(g.w.data());
            out.extend_from_slice(&g.b);
        }
        out
    }
}

impl Model {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        let layers = shapes.iter().map(|&(i, o, _)| Dense::zeros(i, o)).collect();
        let acts = shapes.iter().map(|&(_, _, a)| a).collect();
        Ok(Self { arch, layers, acts })
    }

    /// He-uniform weights `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(arch)?;
        for layer in &mut m.layers {
            let bound = (6.0 / layer.input_width() as f64).sqrt();
            layer.w.data_mut().iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        Ok(m)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Every weight then bias, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.w.data().len();
            l.w.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = l.b.len();
            l.b.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        let start = self.arch.first_block_layer() + block * self.arch.block_depth;
        start..start + self.arch.block_depth
    }

    /// Batch forward pass keeping every intermediate for backpropagation.
    pub fn forward(&self, x: &Matrix) -> Result<Trace> {
        if x.cols() != self.arch.input {
            return Err(Error::Shape(format!(
                "model expects input width {}, got {}",
                self.arch.input,
                x.cols()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.clone();
        let mut run = |i: usize, h: &Matrix| -> Result<Matrix> {
            let z = self.layers[i].pre_activation(h)?;
            let a = self.acts[i].apply(&z);
            inputs.push(h.clone());
            pre.push(z);
            Ok(a)
        };
        let mut i = 0;
        if self.arch.stem.is_some() {
            h = run(i, &h)?;
            i += 1;
        }
        for b in 0..self.arch.blocks {
            let skip = h.clone();
            for li in self.block_range(b) {
                h = run(li, &h)?;
            }
            h.add_assign(&skip)?;
            i += self.arch.block_depth;
        }
        while i < n {
            h = run(i, &h)?;
            i += 1;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("model forward pass".into()));
        }
        Ok(Trace { arch: self.arch.clone(), inputs, pre, output: h })
    }

    /// Forward pass without the trace.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.output)
    }

    /// Q-values of a single state.
    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(state))?.into_data())
    }

    /// Gradients of a scalar loss given its gradient w.r.t. the outputs of `trace`.
    pub fn backward(&self, trace: &Trace, grad_out: &Matrix) -> Result<Gradients> {
        if trace.arch != self.arch || trace.pre.len() != self.layers.len() {
            return Err(Error::Usage("trace was recorded by a different model".into()));
        }
        if grad_out.shape() != trace.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                grad_out.shape(),
                trace.output.shape()
            )));
        }
        let n = self.layers.len();
        let mut grads: Vec<Option<DenseGrad>> = vec![None; n];
        let mut g = grad_out.clone();
        let mut step = |i: usize, g: &Matrix| -> Result<Matrix> {
            let (dg, gin) =
                self.layers[i].backward(&trace.inputs[i], &trace.pre[i], self.acts[i], g)?;
            grads[i] = Some(dg);
            Ok(gin)
        };

        let first_block = self.arch.first_block_layer();
        let after_blocks = first_block + self.arch.blocks * self.arch.block_depth;
        for i in (after_blocks..n).rev() {
            g = step(i, &g)?;
        }
        for b in (0..self.arch.blocks).rev() {
            let skip = g.clone();
            for li in self.block_range(b).rev() {
                g = step(li, &g)?;
            }
            g.add_assign(&skip)?;
        }
        if self.arch.stem.is_some() {
            g = step(0, &g)?;
        }
        let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
        Ok(Gradients { layers, input: g })
    }
}
