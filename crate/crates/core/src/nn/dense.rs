use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gemm, join, Activation, Matrix, Parameters};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// One affine layer `y = act(x W + b)`, with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn affine(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), self.output_dim());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(1.0, x, false, &self.weight, false, 1.0, &mut z);
        z
    }
}

/// Layer shapes and activations of a [`DenseNet`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DenseSpec {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl DenseSpec {
    pub fn new(sizes: &[usize], activations: &[Activation]) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1, "one activation per layer");
        assert!(sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        DenseSpec { sizes: sizes.to_vec(), activations: activations.to_vec() }
    }

    /// `depth` layers: `input -> width -> ... -> output`, with `hidden` between
    /// layers and `last` at the end.
    pub fn mlp(input: usize, width: usize, output: usize, depth: usize, hidden: Activation, last: Activation) -> Self {
        assert!(depth >= 1);
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(width, depth - 1));
        sizes.push(output);
        let mut acts = vec![hidden; depth - 1];
        acts.push(last);
        DenseSpec { sizes, activations: acts }
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Stack of dense layers with manual reverse-mode gradients.
#[derive(Clone, Debug)]
pub struct DenseNet {
    layers: Vec<Dense>,
    version: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations cached by [`DenseNet::forward`]; valid only for the exact
/// parameter state that produced it.
#[derive(Clone, Debug)]
pub struct NetTape {
    version: u64,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl NetTape {
    /// Pre-activations of layer `k`.
    pub fn pre_activation(&self, k: usize) -> &Matrix {
        &self.pre[k]
    }

    pub fn input(&self) -> &Matrix {
        &self.inputs[0]
    }
}

impl DenseNet {
    /// Kaiming-uniform fan-in init for ReLU-family layers, Xavier-uniform for
    /// the rest; zero biases.
    pub fn new<R: Rng + ?Sized>(spec: &DenseSpec, rng: &mut R) -> Self {
        let layers = spec
            .sizes
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if act.is_relu_family() { (6.0 / fan_in as f64).sqrt() } else { (6.0 / (fan_in + fan_out) as f64).sqrt() };
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                Dense { weight: Matrix::from_vec(fan_in, fan_out, data), bias: vec![0.0; fan_out], activation: act }
            })
            .collect();
        DenseNet { layers, version: fresh_version() }
    }

    pub fn zeros(spec: &DenseSpec) -> Self {
        let layers = spec
            .sizes
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, &act)| Dense { weight: Matrix::zeros(w[0], w[1]), bias: vec![0.0; w[1]], activation: act })
            .collect();
        DenseNet { layers, version: fresh_version() }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a dense net needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::DimensionMismatch { context: "dense layer chain", expected: w[0].output_dim(), got: w[1].input_dim() });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::DimensionMismatch { context: "dense bias", expected: l.output_dim(), got: l.bias.len() });
            }
        }
        Ok(DenseNet { layers, version: fresh_version() })
    }

    pub fn spec(&self) -> DenseSpec {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::output_dim));
        DenseSpec { sizes, activations: self.layers.iter().map(|l| l.activation).collect() }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { context: "dense input width", expected: self.input_dim(), got: x.cols() });
        }
        Ok(())
    }

    /// Batched forward pass over the rows of `x`, recording a tape.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, NetTape)> {
        self.check_input(x)?;
        let mut tape = NetTape { version: self.version, inputs: Vec::new(), pre: Vec::new() };
        let mut h = x.clone();
        for l in &self.layers {
            let z = l.affine(&h);
            let y = z.map(|v| l.activation.apply(v));
            tape.inputs.push(h);
            tape.pre.push(z);
            h = y;
        }
        Ok((h, tape))
    }

    /// Forward pass without a tape.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = self.layers[0].affine(x);
        let a = self.layers[0].activation;
        h.data_mut().iter_mut().for_each(|v| *v = a.apply(*v));
        for l in &self.layers[1..] {
            h = l.affine(&h);
            h.data_mut().iter_mut().for_each(|v| *v = l.activation.apply(*v));
        }
        Ok(h)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.infer(&Matrix::from_vec(1, x.len(), x.to_vec()))?.into_vec())
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, tape: &NetTape, dy: &Matrix, grads: &mut DenseNet) -> Result<Matrix> {
        if tape.version != self.version || tape.pre.len() != self.layers.len() {
            return Err(Error::contract("stale tape: parameters changed since the forward pass"));
        }
        if grads.layers.len() != self.layers.len()
            || grads.layers.iter().zip(&self.layers).any(|(g, l)| g.weight.shape() != l.weight.shape())
        {
            return Err(Error::contract("gradient buffer does not match the network"));
        }
        let out = &tape.pre[self.layers.len() - 1];
        if dy.shape() != out.shape() {
            return Err(Error::DimensionMismatch { context: "dense upstream gradient", expected: out.cols(), got: dy.cols() });
        }
        grads.version = fresh_version();
        let mut g = dy.clone();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let z = &tape.pre[k];
            for (gv, &zv) in g.data_mut().iter_mut().zip(z.data()) {
                *gv *= l.activation.derivative(zv);
            }
            let gl = &mut grads.layers[k];
            gemm(1.0, &tape.inputs[k], true, &g, false, 1.0, &mut gl.weight);
            for r in 0..g.rows() {
                for (b, v) in gl.bias.iter_mut().zip(g.row(r)) {
                    *b += v;
                }
            }
            let mut dx = Matrix::zeros(g.rows(), l.input_dim());
            gemm(1.0, &g, false, &l.weight, true, 0.0, &mut dx);
            g = dx;
        }
        Ok(g)
    }
}

impl Parameters for DenseNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (k, l) in self.layers.iter().enumerate() {
            f(&join(prefix, &format!("{k}.weight")), &[l.input_dim(), l.output_dim()], l.weight.data());
            f(&join(prefix, &format!("{k}.bias")), &[l.output_dim()], &l.bias);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.version = fresh_version();
        for (k, l) in self.layers.iter_mut().enumerate() {
            f(&join(prefix, &format!("{k}.weight")), l.weight.data_mut());
            f(&join(prefix, &format!("{k}.bias")), &mut l.bias);
        }
    }
}
