use crate::error::{Error, Result};

/// Named access to every trainable tensor of a model. Gradients use the same
/// type as the model, so optimizers and checkpoints work on any `Parameters`.
pub trait Parameters {
    /// Calls `f(name, shape, values)` for each tensor in a fixed order.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));

    /// Same order as [`Parameters::visit`], mutable.
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

pub trait ParametersExt: Parameters {
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, v| n += v.len());
        n
    }

    fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        self.visit("", &mut |name, shape, _| out.push(TensorSpec { name: name.to_owned(), shape: shape.to_vec() }));
        out
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit("", &mut |_, _, v| out.extend_from_slice(v));
        out
    }

    fn copy_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(Error::DimensionMismatch { context: "flat parameters", expected: n, got: flat.len() });
        }
        let mut off = 0;
        self.visit_mut("", &mut |_, v| {
            v.copy_from_slice(&flat[off..off + v.len()]);
            off += v.len();
        });
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, v| v.fill(value));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, _, v| ok &= v.iter().all(|x| x.is_finite()));
        ok
    }

    fn sum_squares(&self) -> f64 {
        let mut s = 0.0;
        self.visit("", &mut |_, _, v| s += v.iter().map(|x| x * x).sum::<f64>());
        s
    }

    fn scale_all(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, v| v.iter_mut().for_each(|x| *x *= factor));
    }

    /// `self += other`, tensor by tensor. Panics on layout mismatch.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.to_flat();
        assert_eq!(flat.len(), self.param_count(), "accumulate layout");
        let mut off = 0;
        self.visit_mut("", &mut |_, v| {
            for (a, b) in v.iter_mut().zip(&flat[off..]) {
                *a += b;
            }
            off += v.len();
        });
    }

    /// A copy with every entry zero: the gradient buffer for this model.
    fn zeros_like(&self) -> Self
    where
        Self: Sized + Clone,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

impl<T: Parameters + ?Sized> ParametersExt for T {}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: Parameters + ?Sized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.sum_squares().sqrt();
    if norm.is_finite() && norm > max_norm && max_norm > 0.0 {
        grads.scale_all(max_norm / norm);
    }
    norm
}

/// Plain tensor parameter, e.g. an embedding table or a free vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), values: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor { shape: shape.to_vec(), values: vec![v; shape.iter().product()] }
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[1];
        &self.values[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.values[i * c..(i + 1) * c]
    }
}

impl Parameters for Tensor {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(prefix, &self.shape, &self.values);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(prefix, &mut self.values);
    }
}
