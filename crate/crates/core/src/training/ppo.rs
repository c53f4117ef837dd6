use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{gaussian_entropy, squashed_log_prob, Actor, Critic, GraphBatch};
use crate::nn::{clip_grad_norm, AdamW, Matrix, ParametersExt};
use crate::training::rollout::{AgentSample, RolloutBuffer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoSettings {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Minibatches dropped because their loss was not finite.
    pub skipped: usize,
}

/// Mean of `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn surrogate_objective(ratios: &[f64], advantages: &[f64], clip: f64) -> f64 {
    let n = ratios.len().max(1) as f64;
    ratios.iter().zip(advantages).map(|(&r, &a)| (r * a).min(r.clamp(1.0 - clip, 1.0 + clip) * a)).sum::<f64>() / n
}

/// Probability ratios of the stored actions under the current actor.
pub fn ratios(actor: &Actor, samples: &[&AgentSample]) -> Result<Vec<f64>> {
    let batch = GraphBatch::from_local(&samples.iter().map(|s| &s.graph).collect::<Vec<_>>())?;
    let eval = actor.evaluate(&batch)?;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let lp = squashed_log_prob(
                s.pre_tanh,
                [eval.mean[(r, 0)], eval.mean[(r, 1)]],
                [eval.log_std[(r, 0)], eval.log_std[(r, 1)]],
                actor.v_max(),
            );
            (lp - s.log_prob).exp()
        })
        .collect())
}

struct ActorStep {
    loss: f64,
    entropy: f64,
    kl: f64,
    clipped: f64,
}

fn actor_minibatch(actor: &mut Actor, opt: &mut AdamW, samples: &[&AgentSample], cfg: &PpoSettings) -> Result<Option<ActorStep>> {
    let batch = GraphBatch::from_local(&samples.iter().map(|s| &s.graph).collect::<Vec<_>>())?;
    let eval = actor.evaluate(&batch)?;
    let b = samples.len() as f64;
    let mut d_mean = Matrix::zeros(samples.len(), 2);
    let mut d_log_std = Matrix::zeros(samples.len(), 2);
    let (mut surr, mut ent, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0.0);
    for (r, s) in samples.iter().enumerate() {
        let mean = [eval.mean[(r, 0)], eval.mean[(r, 1)]];
        let log_std = [eval.log_std[(r, 0)], eval.log_std[(r, 1)]];
        let lp = squashed_log_prob(s.pre_tanh, mean, log_std, actor.v_max());
        let log_ratio = lp - s.log_prob;
        let ratio = log_ratio.exp();
        let a = s.advantage;
        let unclipped = ratio * a;
        let capped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        surr += unclipped.min(capped);
        ent += gaussian_entropy(log_std);
        kl += (ratio - 1.0) - log_ratio;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1.0;
        }
        // Gradient of -min(.) flows only through the unclipped branch.
        let g_lp = if unclipped <= capped { -a * ratio / b } else { 0.0 };
        for k in 0..2 {
            let inv_var = (-2.0 * log_std[k]).exp();
            let diff = s.pre_tanh[k] - mean[k];
            d_mean[(r, k)] = g_lp * diff * inv_var;
            d_log_std[(r, k)] = g_lp * (diff * diff * inv_var - 1.0) - cfg.entropy_coef / b;
        }
    }
    let loss = -surr / b - cfg.entropy_coef * ent / b;
    if !loss.is_finite() {
        return Ok(None);
    }
    let mut grads = actor.zeros_like();
    actor.backward(&batch, &eval, &d_mean, &d_log_std, &mut grads)?;
    clip_grad_norm(&mut grads, cfg.max_grad_norm);
    if !opt.step(actor, &grads) {
        return Ok(None);
    }
    Ok(Some(ActorStep { loss, entropy: ent / b, kl: kl / b, clipped: clipped / b }))
}

fn critic_minibatch(
    critic: &mut Critic,
    opt: &mut AdamW,
    buffer: &RolloutBuffer,
    states: &[(usize, usize)],
    cfg: &PpoSettings,
) -> Result<Option<f64>> {
    let steps: Vec<_> = states.iter().map(|&(e, s)| &buffer.episodes[e].steps[s]).collect();
    let batch = GraphBatch::from_swarm(&steps.iter().map(|s| &s.swarm).collect::<Vec<_>>())?;
    let eval = critic.evaluate(&batch)?;
    let targets: Vec<f64> = steps.iter().flat_map(|s| s.agents.iter().map(|a| a.target)).collect();
    if targets.len() != eval.values.len() {
        return Err(Error::DimensionMismatch { context: "critic targets", expected: eval.values.len(), got: targets.len() });
    }
    let n = targets.len() as f64;
    let loss = eval.values.iter().zip(&targets).map(|(v, t)| (v - t).powi(2)).sum::<f64>() / n;
    if !loss.is_finite() {
        return Ok(None);
    }
    let d: Vec<f64> = eval.values.iter().zip(&targets).map(|(v, t)| 2.0 * (v - t) / n).collect();
    let mut grads = critic.zeros_like();
    critic.backward(&batch, &eval, &d, &mut grads)?;
    clip_grad_norm(&mut grads, cfg.max_grad_norm);
    if !opt.step(critic, &grads) {
        return Ok(None);
    }
    Ok(Some(loss))
}

/// Several epochs of shuffled minibatch updates: the clipped surrogate with
/// an entropy bonus for the actor, squared error against the GAE targets for
/// the critic. The critic batches whole states so pooling sees every agent.
pub fn ppo_update(
    buffer: &RolloutBuffer,
    actor: &mut Actor,
    critic: &mut Critic,
    actor_opt: &mut AdamW,
    critic_opt: &mut AdamW,
    cfg: &PpoSettings,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    if !buffer.is_sealed() {
        return Err(Error::contract("ppo update needs a sealed buffer"));
    }
    if !(cfg.clip > 0.0) || cfg.minibatch == 0 {
        return Err(Error::config("ppo clip must be positive and minibatch non-zero"));
    }
    let samples: Vec<&AgentSample> = buffer.samples().collect();
    let states = buffer.state_index();
    let mut report = LossReport::default();
    let (mut n_actor, mut n_critic) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut state_order = states.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mb: Vec<&AgentSample> = chunk.iter().map(|&i| samples[i]).collect();
            match actor_minibatch(actor, actor_opt, &mb, cfg)? {
                Some(s) => {
                    report.actor_loss += s.loss;
                    report.entropy += s.entropy;
                    report.approx_kl += s.kl;
                    report.clip_fraction += s.clipped;
                    n_actor += 1;
                }
                None => report.skipped += 1,
            }
        }
        state_order.shuffle(rng);
        let mut start = 0;
        while start < state_order.len() {
            let mut end = start;
            let mut count = 0;
            while end < state_order.len() && count < cfg.minibatch {
                let (e, s) = state_order[end];
                count += buffer.episodes[e].steps[s].agents.len();
                end += 1;
            }
            match critic_minibatch(critic, critic_opt, buffer, &state_order[start..end], cfg)? {
                Some(l) => {
                    report.critic_loss += l;
                    n_critic += 1;
                }
                None => report.skipped += 1,
            }
            start = end;
        }
    }
    let na = n_actor.max(1) as f64;
    report.actor_loss /= na;
    report.entropy /= na;
    report.approx_kl /= na;
    report.clip_fraction /= na;
    report.critic_loss /= n_critic.max(1) as f64;
    Ok(report)
}
