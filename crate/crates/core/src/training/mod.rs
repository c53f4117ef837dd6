//! Rollout collection, advantage estimation and the adversarial imitation
//! training loop.

mod gae;
mod gail;
mod ppo;
mod rollout;

pub use gae::{compute_gae, normalize_advantages};
pub use gail::{discriminator_step, score_pairs, DiscStep, ExpertSampler, Pair, RandomPolicy};
pub use ppo::{ppo_update, ratios, surrogate_objective, LossReport, PpoSettings};
pub use rollout::{collect_episode, evaluate_episode, neighbor_distances, AgentSample, EpisodeRollout, RolloutBuffer, StepRecord};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::heuristic;
use crate::error::{Error, Result};
use crate::gnn::{ModelConfig, Models};
use crate::imitation::{build_expert_db, ExpertDb, RewardConfig, RunningNorm};
use crate::nn::{AdamW, AdamWConfig};
use crate::perception::PerceptionConfig;
use crate::sim::{default_map_width, generate_scenario, run_episode, ActMode, EpisodeOptions, Policy, Scenario};

/// Independent seed for stream `tag`, item `idx` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64, idx: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ idx.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TAG_POOL: u64 = 1;
const TAG_VALIDATION: u64 = 2;
const TAG_ROLLOUT: u64 = 3;
const TAG_PICK: u64 = 4;
const TAG_UPDATE: u64 = 5;
const TAG_DISC: u64 = 6;
const TAG_INIT: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_agents: usize,
    pub damage_ratios: Vec<f64>,
    /// Training scenarios with offline expert coverage.
    pub pool_size: usize,
    pub validation_size: usize,
    pub n_envs: usize,
    pub n_epochs: usize,
    /// Per-episode step cap during rollouts; `None` runs to `t_max`.
    pub rollout_horizon: Option<usize>,
    pub ppo_clip: f64,
    pub policy_epochs: usize,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub minibatch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub disc_lr: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub disc_updates_per_epoch: usize,
    /// Expert and policy pairs per discriminator step (each side).
    pub disc_batch: usize,
    pub checkpoint_every: usize,
    pub k_act: usize,
    pub k_dmg: usize,
    pub expert_generators: Vec<String>,
    pub reward: RewardConfig,
    pub model: ModelConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_agents: 20,
            damage_ratios: vec![0.25, 0.5, 0.75],
            pool_size: 48,
            validation_size: 6,
            n_envs: 8,
            n_epochs: 100,
            rollout_horizon: None,
            ppo_clip: 0.2,
            policy_epochs: 5,
            entropy_start: 0.05,
            entropy_end: 0.005,
            gamma: 0.99,
            gae_lambda: 0.95,
            minibatch: 1024,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            disc_lr: 1e-4,
            weight_decay: 0.01,
            max_grad_norm: 0.5,
            disc_updates_per_epoch: 1,
            disc_batch: 256,
            checkpoint_every: 10,
            k_act: PerceptionConfig::DEFAULT_K_ACT,
            k_dmg: PerceptionConfig::DEFAULT_K_DMG,
            expert_generators: vec!["center-fly".into(), "potential-field".into()],
            reward: RewardConfig::default(),
            model: ModelConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(self.ppo_clip > 0.0) {
            return bad("ppo_clip must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.n_agents < 2 || self.n_envs == 0 || self.n_epochs == 0 || self.pool_size == 0 || self.minibatch == 0 {
            return bad("n_agents >= 2 and n_envs, n_epochs, pool_size, minibatch >= 1 are required");
        }
        if self.damage_ratios.is_empty() || self.damage_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("damage_ratios must be non-empty and inside (0, 1)");
        }
        if ![self.actor_lr, self.critic_lr, self.disc_lr].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return bad("learning rates must be positive");
        }
        for g in &self.expert_generators {
            if heuristic(g).is_none() {
                return Err(Error::config(format!("unknown expert generator {g:?}")));
            }
        }
        self.reward.validate()
    }

    /// Linear decay from `entropy_start` at epoch 0 to `entropy_end` at the last epoch.
    pub fn entropy_coef(&self, epoch: usize) -> f64 {
        if self.n_epochs <= 1 {
            return self.entropy_start;
        }
        let f = epoch.min(self.n_epochs - 1) as f64 / (self.n_epochs - 1) as f64;
        self.entropy_start + (self.entropy_end - self.entropy_start) * f
    }

    pub fn perception_for(&self, sc: &Scenario) -> PerceptionConfig {
        PerceptionConfig::for_scenario(sc).with_budgets(self.k_act, self.k_dmg)
    }

    fn adamw(&self, lr: f64) -> AdamWConfig {
        AdamWConfig { lr, weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }

    fn scenarios(&self, tag: u64, count: usize) -> Result<Vec<Scenario>> {
        let width = default_map_width(self.n_agents);
        (0..count)
            .map(|k| {
                let rho = self.damage_ratios[k % self.damage_ratios.len()];
                generate_scenario(self.n_agents, rho, width, derive_seed(self.seed, tag, k as u64))
            })
            .collect()
    }

    /// Training pool and held-out validation scenarios.
    pub fn make_scenarios(&self) -> Result<(Vec<Scenario>, Vec<Scenario>)> {
        Ok((self.scenarios(TAG_POOL, self.pool_size)?, self.scenarios(TAG_VALIDATION, self.validation_size)?))
    }

    /// Offline expert database over `pool` using the configured heuristics.
    pub fn build_expert_db(&self, pool: &[Scenario]) -> Result<ExpertDb> {
        let gens: Vec<Box<dyn Policy>> = self.expert_generators.iter().filter_map(|g| heuristic(g)).collect();
        let refs: Vec<&dyn Policy> = gens.iter().map(|g| g.as_ref()).collect();
        let pcfg = pool.first().map(|sc| self.perception_for(sc));
        build_expert_db(pool, &refs, pcfg.as_ref())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_return: f64,
    pub train_success: f64,
    pub val_return: f64,
    pub val_success: f64,
    pub val_steps: f64,
    pub samples: usize,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub entropy_coef: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub disc_loss: Option<f64>,
    pub expert_score: Option<f64>,
    pub policy_score: Option<f64>,
    pub skipped: usize,
    pub optimizer_faults: u64,
    /// Seconds since training started; the only non-reproducible field.
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_return: f64,
    pub models: Models,
}

/// Owns the learner state between epochs.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub models: Models,
    pub pool: Vec<Scenario>,
    pub validation: Vec<Scenario>,
    db: Option<ExpertDb>,
    t_e: HashMap<String, usize>,
    actor_opt: AdamW,
    critic_opt: AdamW,
    disc_opt: AdamW,
    norm: Option<RunningNorm>,
    epoch: usize,
    started: Instant,
}

impl Trainer {
    /// `db` is required when the imitation weight is positive.
    pub fn new(cfg: TrainConfig, pool: Vec<Scenario>, validation: Vec<Scenario>, db: Option<ExpertDb>) -> Result<Self> {
        let models = Models::new(&cfg.model, derive_seed(cfg.seed, TAG_INIT, 0))?;
        Self::with_models(cfg, models, pool, validation, db)
    }

    pub fn with_models(
        cfg: TrainConfig,
        models: Models,
        pool: Vec<Scenario>,
        validation: Vec<Scenario>,
        db: Option<ExpertDb>,
    ) -> Result<Self> {
        cfg.validate()?;
        if pool.is_empty() {
            return Err(Error::config("training pool is empty"));
        }
        if cfg.reward.w_il > 0.0 {
            match &db {
                Some(d) if d.pair_count() > 0 => {}
                Some(d) => return Err(Error::EmptyExpertDb { uncovered: d.uncovered.len() }),
                None => return Err(Error::EmptyExpertDb { uncovered: pool.len() }),
            }
        }
        let t_e = db.iter().flat_map(|d| &d.records).map(|r| (r.scenario_id.clone(), r.t_e)).collect();
        Ok(Trainer {
            actor_opt: AdamW::for_params(cfg.adamw(cfg.actor_lr), &models.actor),
            critic_opt: AdamW::for_params(cfg.adamw(cfg.critic_lr), &models.critic),
            disc_opt: AdamW::for_params(cfg.adamw(cfg.disc_lr), &models.discriminator),
            norm: cfg.reward.normalize.then(|| RunningNorm::new(10_000)),
            cfg,
            models,
            pool,
            validation,
            db,
            t_e,
            epoch: 0,
            started: Instant::now(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Expert completion time for the speed bonus; uncovered scenarios use `t_max / 2`.
    pub fn t_e_for(&self, sc: &Scenario) -> f64 {
        self.t_e.get(&sc.id).map_or(sc.t_max as f64 / 2.0, |&t| (t.max(1)) as f64)
    }

    fn collect(&self) -> Result<RolloutBuffer> {
        let epoch = self.epoch as u64;
        let n_envs = self.cfg.n_envs as u64;
        let jobs: Vec<(usize, u64)> = (0..n_envs)
            .map(|e| {
                let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, TAG_PICK, epoch * n_envs + e));
                (pick.random_range(0..self.pool.len()), derive_seed(self.cfg.seed, TAG_ROLLOUT, epoch * n_envs + e))
            })
            .collect();
        let actor = &self.models.actor;
        let critic = &self.models.critic;
        let episodes = jobs
            .par_iter()
            .map(|&(k, seed)| {
                let sc = &self.pool[k];
                collect_episode(actor, critic, sc, &self.cfg.perception_for(sc), self.t_e_for(sc), self.cfg.rollout_horizon, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RolloutBuffer::new(episodes))
    }

    fn update_discriminator(&mut self, buffer: &RolloutBuffer, m: &mut EpochMetrics) -> Result<()> {
        let db = self.db.as_ref().expect("checked at construction");
        let sampler = ExpertSampler::new(db)?;
        let samples: Vec<&AgentSample> = buffer.samples().collect();
        if samples.is_empty() {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, TAG_DISC, self.epoch as u64));
        let (mut loss, mut es, mut ps) = (0.0, 0.0, 0.0);
        let n = self.cfg.disc_updates_per_epoch.max(1);
        for _ in 0..n {
            let expert = sampler.sample(self.cfg.disc_batch, &mut rng);
            let policy: Vec<Pair> = (0..self.cfg.disc_batch)
                .map(|_| {
                    let s = samples[rng.random_range(0..samples.len())];
                    (s.graph.clone(), s.action)
                })
                .collect();
            let step = discriminator_step(&mut self.models.discriminator, &mut self.disc_opt, &expert, &policy, self.cfg.max_grad_norm)?;
            if !step.applied {
                m.skipped += 1;
            }
            loss += step.loss;
            es += step.expert_score;
            ps += step.policy_score;
        }
        m.disc_loss = Some(loss / n as f64);
        m.expert_score = Some(es / n as f64);
        m.policy_score = Some(ps / n as f64);
        Ok(())
    }

    fn validate_policy(&self) -> Result<(f64, f64, f64)> {
        if self.validation.is_empty() {
            return Ok((0.0, 0.0, 0.0));
        }
        let runs = self
            .validation
            .par_iter()
            .map(|sc| evaluate_episode(&self.models.actor, sc, &self.cfg.perception_for(sc), &self.cfg.reward, self.t_e_for(sc), sc.seed))
            .collect::<Result<Vec<_>>>()?;
        let n = runs.len() as f64;
        Ok((
            runs.iter().map(|r| r.0).sum::<f64>() / n,
            runs.iter().filter(|r| r.1).count() as f64 / n,
            runs.iter().map(|r| r.2 as f64).sum::<f64>() / n,
        ))
    }

    /// Collect, update the discriminator, score, seal, update actor and critic, validate.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let mut m = EpochMetrics { epoch: self.epoch, entropy_coef: self.cfg.entropy_coef(self.epoch), ..Default::default() };
        let mut buffer = self.collect()?;
        let imitation = self.cfg.reward.w_il > 0.0;
        let scores = if imitation {
            self.update_discriminator(&buffer, &mut m)?;
            Some(score_pairs(&self.models.discriminator, buffer.samples().map(|s| (&s.graph, s.action)), 1024)?)
        } else {
            None
        };
        buffer.seal(scores.as_deref(), &self.cfg.reward, self.cfg.gamma, self.cfg.gae_lambda, self.norm.as_mut())?;
        m.samples = buffer.len();
        let n_ep = buffer.episodes.len().max(1) as f64;
        m.train_return = buffer.episodes.iter().map(|e| e.mean_return()).sum::<f64>() / n_ep;
        m.train_success = buffer.episodes.iter().filter(|e| e.converged).count() as f64 / n_ep;
        if !buffer.is_empty() {
            let settings = PpoSettings {
                clip: self.cfg.ppo_clip,
                epochs: self.cfg.policy_epochs,
                minibatch: self.cfg.minibatch,
                entropy_coef: m.entropy_coef,
                max_grad_norm: self.cfg.max_grad_norm,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, TAG_UPDATE, self.epoch as u64));
            let Models { actor, critic, .. } = &mut self.models;
            let report = ppo_update(&buffer, actor, critic, &mut self.actor_opt, &mut self.critic_opt, &settings, &mut rng)?;
            m.actor_loss = report.actor_loss;
            m.critic_loss = report.critic_loss;
            m.entropy = report.entropy;
            m.approx_kl = report.approx_kl;
            m.clip_fraction = report.clip_fraction;
            m.skipped += report.skipped;
        }
        (m.val_return, m.val_success, m.val_steps) = self.validate_policy()?;
        m.optimizer_faults = self.actor_opt.faults + self.critic_opt.faults + self.disc_opt.faults;
        m.wall_time = self.started.elapsed().as_secs_f64();
        self.epoch += 1;
        Ok(m)
    }

    /// Runs the remaining epochs. With `out_dir`, writes `config.json`,
    /// `metrics.jsonl` and checkpoints (`epoch_NNNN.ckpt`, `best.ckpt`, `last.ckpt`).
    pub fn run(mut self, out_dir: Option<&Path>) -> Result<TrainReport> {
        let mut log = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir.join("checkpoints"))?;
                std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.cfg)?)?;
                Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
            }
            None => None,
        };
        let ckpt = |name: String| -> Option<PathBuf> { out_dir.map(|d| d.join("checkpoints").join(name)) };
        let mut metrics = Vec::new();
        let (mut best_epoch, mut best) = (0, f64::NEG_INFINITY);
        while self.epoch < self.cfg.n_epochs {
            let m = self.run_epoch()?;
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", serde_json::to_string(&m)?)?;
                w.flush()?;
            }
            let extra = serde_json::json!({ "epoch": m.epoch, "val_return": m.val_return });
            if m.val_return > best {
                best = m.val_return;
                best_epoch = m.epoch;
                if let Some(p) = ckpt("best.ckpt".into()) {
                    self.models.save(p, extra.clone())?;
                }
            }
            if self.cfg.checkpoint_every > 0 && (m.epoch + 1) % self.cfg.checkpoint_every == 0 {
                if let Some(p) = ckpt(format!("epoch_{:04}.ckpt", m.epoch + 1)) {
                    self.models.save(p, extra)?;
                }
            }
            metrics.push(m);
        }
        if let Some(p) = ckpt("last.ckpt".into()) {
            self.models.save(p, serde_json::json!({ "epoch": self.epoch }))?;
        }
        Ok(TrainReport { metrics, best_epoch, best_val_return: best, models: self.models })
    }
}

/// Builds the scenario sets and (when imitation is on) the expert database,
/// then trains.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    let (pool, validation) = cfg.make_scenarios()?;
    let db = if cfg.reward.w_il > 0.0 { Some(cfg.build_expert_db(&pool)?) } else { None };
    if let (Some(dir), Some(db)) = (out_dir, db.as_ref()) {
        db.save(dir.join("expert_db"))?;
    }
    Trainer::new(cfg.clone(), pool, validation, db)?.run(out_dir)
}

/// Mean discriminator score on expert pairs and on pairs from a uniformly
/// random policy rolled out on `scenarios`.
pub fn discriminator_gap(models: &Models, db: &ExpertDb, scenarios: &[Scenario], per_side: usize, seed: u64) -> Result<(f64, f64)> {
    let sampler = ExpertSampler::new(db)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expert = sampler.sample(per_side, &mut rng);
    let random = RandomPolicy { v_max: models.cfg.actor.v_max };
    let mut policy = Vec::new();
    for (k, sc) in scenarios.iter().cycle().enumerate().take(scenarios.len() * 64) {
        if policy.len() >= per_side {
            break;
        }
        let opts = EpisodeOptions {
            mode: ActMode::Stochastic,
            seed: derive_seed(seed, TAG_ROLLOUT, k as u64),
            record_observations: true,
            max_steps: Some(sc.t_max.min(40)),
            perception: db.perception.clone(),
            ..Default::default()
        };
        let r = run_episode(sc, &random, &opts)?;
        policy.extend(r.trajectory.steps.into_iter().flatten().map(|s| (s.graph, s.action)));
    }
    policy.truncate(per_side);
    let d = &models.discriminator;
    let e = score_pairs(d, expert.iter().map(|p| (&p.0, p.1)), 1024)?;
    let p = score_pairs(d, policy.iter().map(|p| (&p.0, p.1)), 1024)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok((mean(&e), mean(&p)))
}
