use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::gnn::{Discriminator, GraphBatch};
use crate::imitation::{discriminator_loss_logits, ExpertDb, D4};
use crate::nn::{clip_grad_norm, sigmoid, AdamW, ParametersExt};
use crate::perception::LocalGraph;
use crate::sim::{ActMode, Policy};

/// An (observation, action) pair fed to the discriminator.
pub type Pair = (LocalGraph, Vec2);

/// Draws expert pairs uniformly over the database, each under a uniformly
/// drawn symmetry of the square.
pub struct ExpertSampler<'a> {
    db: &'a ExpertDb,
    index: Vec<(usize, usize)>,
}

impl<'a> ExpertSampler<'a> {
    pub fn new(db: &'a ExpertDb) -> Result<Self> {
        let index: Vec<(usize, usize)> =
            db.records.iter().enumerate().flat_map(|(r, rec)| (0..rec.pairs.len()).map(move |p| (r, p))).collect();
        if index.is_empty() {
            return Err(Error::EmptyExpertDb { uncovered: db.uncovered.len() });
        }
        Ok(ExpertSampler { db, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Pair> {
        let all = D4::all();
        (0..n)
            .map(|_| {
                let (r, p) = self.index[rng.random_range(0..self.index.len())];
                let pair = &self.db.records[r].pairs[p];
                let g = all[rng.random_range(0..8)];
                (g.apply_graph(&pair.graph), g.apply(pair.action))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiscStep {
    pub loss: f64,
    pub expert_score: f64,
    pub policy_score: f64,
    pub applied: bool,
}

/// One smoothed-label gradient step on a batch of expert and policy pairs.
pub fn discriminator_step(
    disc: &mut Discriminator,
    opt: &mut AdamW,
    expert: &[Pair],
    policy: &[Pair],
    max_grad_norm: f64,
) -> Result<DiscStep> {
    let graphs: Vec<&LocalGraph> = expert.iter().chain(policy).map(|p| &p.0).collect();
    let actions: Vec<Vec2> = expert.iter().chain(policy).map(|p| p.1).collect();
    let batch = GraphBatch::from_local(&graphs)?;
    let eval = disc.evaluate(&batch, &actions)?;
    let (le, lp) = eval.logits.split_at(expert.len());
    let (loss, ge, gp) = discriminator_loss_logits(le, lp);
    let mean_score = |z: &[f64]| if z.is_empty() { 0.0 } else { z.iter().map(|&v| sigmoid(v)).sum::<f64>() / z.len() as f64 };
    let mut step = DiscStep { loss, expert_score: mean_score(le), policy_score: mean_score(lp), applied: false };
    if !loss.is_finite() {
        return Ok(step);
    }
    let d: Vec<f64> = ge.into_iter().chain(gp).collect();
    let mut grads = disc.zeros_like();
    disc.backward(&batch, &eval, &d, &mut grads)?;
    clip_grad_norm(&mut grads, max_grad_norm);
    step.applied = opt.step(disc, &grads);
    Ok(step)
}

/// Scores of `pairs` in chunks of `chunk`.
pub fn score_pairs<'a>(disc: &Discriminator, pairs: impl Iterator<Item = (&'a LocalGraph, Vec2)>, chunk: usize) -> Result<Vec<f64>> {
    let pairs: Vec<_> = pairs.collect();
    let mut out = Vec::with_capacity(pairs.len());
    for c in pairs.chunks(chunk.max(1)) {
        let graphs: Vec<&LocalGraph> = c.iter().map(|p| p.0).collect();
        let actions: Vec<Vec2> = c.iter().map(|p| p.1).collect();
        out.extend(disc.scores(&GraphBatch::from_local(&graphs)?, &actions)?);
    }
    Ok(out)
}

/// Uniform actions over the speed disc, ignoring the observation.
#[derive(Clone, Copy, Debug)]
pub struct RandomPolicy {
    pub v_max: f64,
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&self, _: &LocalGraph, _: ActMode, rng: &mut ChaCha8Rng) -> Vec2 {
        let r = self.v_max * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        Vec2::new(r * a.cos(), r * a.sin())
    }
}
