use serde::{Deserialize, Serialize};

use crate::nn::{Parameters, ParametersExt};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    /// Updates skipped because a gradient entry was not finite.
    pub faults: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, n_params: usize) -> Self {
        AdamW { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0, faults: 0 }
    }

    pub fn for_params<P: Parameters + ?Sized>(cfg: AdamWConfig, params: &P) -> Self {
        Self::new(cfg, params.param_count())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Returns `false` (and counts a fault) when the
    /// gradient has a non-finite entry; parameters are then left untouched.
    pub fn step<P: Parameters + ?Sized, G: Parameters + ?Sized>(&mut self, params: &mut P, grads: &G) -> bool {
        let g = grads.to_flat();
        assert_eq!(g.len(), self.m.len(), "optimizer state does not match the parameters");
        if !g.iter().all(|x| x.is_finite()) {
            self.faults += 1;
            return false;
        }
        self.step += 1;
        let AdamWConfig { lr, beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(&g) {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (&self.m, &self.v);
        let mut off = 0;
        params.visit_mut("", &mut |_, p| {
            for (k, x) in p.iter_mut().enumerate() {
                let i = off + k;
                *x -= lr * weight_decay * *x;
                *x -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
            off += p.len();
        });
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = Tensor::full(&[3], 0.7);
        let g = Tensor::zeros(&[3]);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, 3);
        for _ in 0..10 {
            opt.step(&mut p, &g);
        }
        assert_eq!(p.values, vec![0.7; 3]);
    }

    #[test]
    fn decay_alone_shrinks_geometrically() {
        let mut p = Tensor::full(&[1], 2.0);
        let g = Tensor::zeros(&[1]);
        let cfg = AdamWConfig { lr: 1e-2, weight_decay: 0.01, ..Default::default() };
        let mut opt = AdamW::new(cfg, 1);
        for _ in 0..5 {
            opt.step(&mut p, &g);
        }
        let want = 2.0 * (1.0f64 - 1e-2 * 0.01).powi(5);
        assert!((p.values[0] - want).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_about_lr_per_step() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor { shape: vec![2], values: vec![3.0, -0.02] };
        let cfg = AdamWConfig { lr: 1e-3, weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, 2);
        for _ in 0..200 {
            let before = p.values.clone();
            opt.step(&mut p, &g);
            for k in 0..2 {
                let d = before[k] - p.values[k];
                assert!((d.abs() - 1e-3).abs() < 1e-6, "step {d}");
                assert_eq!(d.signum(), g.values[k].signum());
            }
        }
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut p = Tensor::full(&[2], 1.0);
        let g = Tensor { shape: vec![2], values: vec![f64::NAN, 0.0] };
        let mut opt = AdamW::new(AdamWConfig::default(), 2);
        assert!(!opt.step(&mut p, &g));
        assert_eq!(opt.faults, 1);
        assert_eq!(opt.steps(), 0);
        assert_eq!(p.values, vec![1.0; 2]);
    }
}
