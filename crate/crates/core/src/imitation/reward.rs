use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softplus;

pub const GAIL_EPS: f64 = 1e-8;
/// Expert-side smoothed target.
pub const LAMBDA_EXPERT: f64 = 0.9;
/// Policy-side smoothing: the policy term is weighted by `1 - LAMBDA_AGENT`.
pub const LAMBDA_AGENT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_il: f64,
    pub r_step: f64,
    pub omega_col: f64,
    pub r_base: f64,
    pub r_time: f64,
    pub p_fail: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub eta_max: f64,
    pub r_max: f64,
    /// Safety margin used by the training penalty, meters.
    pub d_safe_train: f64,
    /// Standardize rewards with running statistics before clipping.
    pub normalize: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w_il: 0.1,
            r_step: -0.01,
            omega_col: 0.1,
            r_base: 10.0,
            r_time: 5.0,
            p_fail: 5.0,
            alpha: 1.5,
            lambda: 1.0,
            eta_max: 2.0,
            r_max: 20.0,
            d_safe_train: 15.0,
            normalize: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.w_il >= 0.0
            && self.r_step < 0.0
            && self.alpha >= 1.0
            && self.eta_max >= 1.0
            && self.r_max > 0.0
            && self.omega_col >= 0.0
            && self.d_safe_train >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("reward config needs w_il >= 0, r_step < 0, alpha >= 1, eta_max >= 1, r_max > 0"))
        }
    }
}

/// `-ln(1 - clip(d, eps, 1 - eps))`.
pub fn gail_reward(d: f64) -> f64 {
    -(-d.clamp(GAIL_EPS, 1.0 - GAIL_EPS)).ln_1p()
}

/// Smoothed discriminator loss over scores in (0,1).
pub fn discriminator_loss(expert: &[f64], policy: &[f64]) -> Result<f64> {
    if expert.iter().chain(policy).any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Error::contract("discriminator scores must lie strictly inside (0,1)"));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| if v.is_empty() { 0.0 } else { v.iter().map(|&d| f(d)).sum::<f64>() / v.len() as f64 };
    Ok(-mean(expert, &|d| LAMBDA_EXPERT * d.ln()) - mean(policy, &|d| (1.0 - LAMBDA_AGENT) * (-d).ln_1p()))
}

/// The same loss evaluated on logits (`D = sigmoid(z)`), with its gradient
/// with respect to every logit. Stable for large `|z|`.
pub fn discriminator_loss_logits(expert: &[f64], policy: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let ne = expert.len().max(1) as f64;
    let np = policy.len().max(1) as f64;
    let we = LAMBDA_EXPERT;
    let wp = 1.0 - LAMBDA_AGENT;
    // -ln sigmoid(z) = softplus(-z); -ln(1 - sigmoid(z)) = softplus(z).
    let loss = expert.iter().map(|&z| we * softplus(-z)).sum::<f64>() / ne + policy.iter().map(|&z| wp * softplus(z)).sum::<f64>() / np;
    let ge = expert.iter().map(|&z| -we * crate::nn::sigmoid(-z) / ne).collect();
    let gp = policy.iter().map(|&z| wp * crate::nn::sigmoid(z) / np).collect();
    (loss, ge, gp)
}

/// `min(exp(lambda (1 - t / (alpha T_E))), eta_max)`.
pub fn speed_bonus(t: f64, t_e: f64, cfg: &RewardConfig) -> f64 {
    assert!(t_e > 0.0, "expert completion time must be positive");
    (cfg.lambda * (1.0 - t / (cfg.alpha * t_e))).exp().min(cfg.eta_max)
}

/// `r_base + r_time * eta(t)`.
pub fn success_reward(t: f64, t_e: f64, cfg: &RewardConfig) -> f64 {
    cfg.r_base + cfg.r_time * speed_bonus(t, t_e, cfg)
}

/// `-omega * sum max(0, D_safe - d)` over neighbor distances.
pub fn safety_penalty(distances: &[f64], cfg: &RewardConfig) -> f64 {
    -cfg.omega_col * distances.iter().map(|&d| (cfg.d_safe_train - d).max(0.0)).sum::<f64>()
}

/// Per-agent inputs to one step's reward.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardContext<'a> {
    /// Distances to alive agents within communication range.
    pub neighbor_distances: &'a [f64],
    /// Discriminator score of this agent's (observation, action); `None` skips imitation.
    pub score: Option<f64>,
    /// Survivor components after the step.
    pub components: usize,
    /// Step index after the transition (1 for the first step).
    pub t: usize,
    pub t_max: usize,
    /// Expert completion time used by the speed bonus.
    pub t_e: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub gail: f64,
    pub step: f64,
    pub safety: f64,
    pub terminal: f64,
    pub total_clipped: f64,
}

pub fn terminal_reward(components: usize, t: usize, t_max: usize, t_e: f64, cfg: &RewardConfig) -> f64 {
    if components <= 1 {
        success_reward(t as f64, t_e, cfg)
    } else if t >= t_max {
        -cfg.p_fail * components as f64
    } else {
        0.0
    }
}

pub fn synthesize_reward(ctx: &RewardContext, cfg: &RewardConfig) -> RewardBreakdown {
    let gail = ctx.score.map_or(0.0, gail_reward);
    let step = cfg.r_step;
    let safety = safety_penalty(ctx.neighbor_distances, cfg);
    let terminal = terminal_reward(ctx.components, ctx.t, ctx.t_max, ctx.t_e, cfg);
    let raw = cfg.w_il * gail + step + safety + terminal;
    RewardBreakdown { gail, step, safety, terminal, total_clipped: raw.clamp(-cfg.r_max, cfg.r_max) }
}

/// Running mean/variance standardizer. Exact for the first `window`
/// samples, exponentially weighted with horizon `window` afterwards.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: f64,
    mean: f64,
    var: f64,
    pub window: f64,
}

impl RunningNorm {
    pub fn new(window: usize) -> Self {
        RunningNorm { window: window.max(1) as f64, ..Default::default() }
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1.0;
        let b = 1.0 / self.count.min(self.window);
        let d = x - self.mean;
        self.mean += b * d;
        self.var = (1.0 - b) * (self.var + b * d * d);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            self.var.sqrt().max(1e-8)
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gail_examples() {
        assert!((gail_reward(0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        // 1 - 1e-8 is not representable, so the cap is only accurate to ~1e-8.
        assert!((gail_reward(1.0) - 18.420680743952367).abs() < 1e-6);
        assert!((gail_reward(0.0) - 1e-8).abs() < 1e-15);
        assert!(gail_reward(0.3) < gail_reward(0.31));
    }

    #[test]
    fn discriminator_loss_examples() {
        let e = discriminator_loss(&[0.9], &[]).unwrap();
        assert!((e - (-0.9 * 0.9f64.ln())).abs() < 1e-12);
        let p = discriminator_loss(&[], &[0.1]).unwrap();
        assert!((p - (-0.9 * 0.9f64.ln())).abs() < 1e-12);
        let h = discriminator_loss(&[0.5; 4], &[0.5; 3]).unwrap();
        assert!((h - 1.8 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(discriminator_loss(&[1.0], &[0.5]).is_err());
        assert!(discriminator_loss(&[0.5], &[0.0]).is_err());
    }

    #[test]
    fn logit_loss_agrees_with_score_loss_and_its_gradient() {
        let ze = [0.3, -1.2, 2.0];
        let zp = [-0.4, 1.5];
        let s = |z: &[f64]| z.iter().map(|&v| crate::nn::sigmoid(v)).collect::<Vec<_>>();
        let (l, ge, gp) = discriminator_loss_logits(&ze, &zp);
        assert!((l - discriminator_loss(&s(&ze), &s(&zp)).unwrap()).abs() < 1e-12);
        let h = 1e-6;
        for i in 0..3 {
            let mut a = ze;
            a[i] += h;
            let mut b = ze;
            b[i] -= h;
            let fd = (discriminator_loss_logits(&a, &zp).0 - discriminator_loss_logits(&b, &zp).0) / (2.0 * h);
            assert!((fd - ge[i]).abs() < 1e-8);
        }
        for i in 0..2 {
            let mut a = zp;
            a[i] += h;
            let mut b = zp;
            b[i] -= h;
            let fd = (discriminator_loss_logits(&ze, &a).0 - discriminator_loss_logits(&ze, &b).0) / (2.0 * h);
            assert!((fd - gp[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn speed_bonus_examples() {
        let c = RewardConfig::default();
        assert!((speed_bonus(1.5 * 40.0, 40.0, &c) - 1.0).abs() < 1e-12);
        assert_eq!(speed_bonus(0.0, 40.0, &c), 2.0);
        assert!((speed_bonus(3.0 * 40.0, 40.0, &c) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn synthesis_examples() {
        let c = RewardConfig::default();
        let mid = RewardContext { neighbor_distances: &[50.0], score: Some(0.5), components: 2, t: 10, t_max: 256, t_e: 40.0 };
        let r = synthesize_reward(&mid, &c);
        assert!((r.total_clipped - (0.1 * std::f64::consts::LN_2 - 0.01)).abs() < 1e-12);
        assert!((safety_penalty(&[12.0], &c) + 0.3).abs() < 1e-12);
        assert!((terminal_reward(3, 256, 256, 40.0, &c) + 15.0).abs() < 1e-12);
        let win = RewardContext { neighbor_distances: &[], score: None, components: 1, t: 0, t_max: 256, t_e: 40.0 };
        assert_eq!(synthesize_reward(&win, &c).terminal, 20.0);
        let crash = RewardContext { neighbor_distances: &[0.0; 30], score: None, components: 2, t: 3, t_max: 256, t_e: 40.0 };
        assert_eq!(synthesize_reward(&crash, &c).total_clipped, -20.0);
    }

    #[test]
    fn running_norm_standardizes() {
        let mut n = RunningNorm::new(10_000);
        for k in 0..5000 {
            n.update(3.0 + 2.0 * ((k % 2) as f64 * 2.0 - 1.0));
        }
        assert!(n.normalize(3.0).abs() < 1e-6);
        assert!((n.std() - 2.0).abs() < 1e-3);
    }
}
