use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::gnn::{Actor, Critic, GraphBatch};
use crate::imitation::{synthesize_reward, RewardBreakdown, RewardConfig, RewardContext, RunningNorm};
use crate::perception::{LocalGraph, PerceptionConfig, SwarmGraph};
use crate::sim::{ActMode, Env, Scenario, SwarmState};
use crate::training::gae::{compute_gae, normalize_advantages};

/// One agent's transition.
#[derive(Clone, Debug)]
pub struct AgentSample {
    pub agent: usize,
    pub graph: LocalGraph,
    pub pre_tanh: [f64; 2],
    pub action: Vec2,
    /// Log-density of the executed action under the behavior policy.
    pub log_prob: f64,
    pub value: f64,
    /// Distances to in-range alive agents after the step.
    pub neighbor_distances: Vec<f64>,
    pub reward: RewardBreakdown,
    /// Final training reward (after optional normalization and clipping).
    pub total: f64,
    pub done: bool,
    pub advantage: f64,
    pub target: f64,
}

/// All agents' transitions for one time step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// Noise-free global graph of the pre-step state (critic input).
    pub swarm: SwarmGraph,
    pub agents: Vec<AgentSample>,
    /// Survivor components after the step.
    pub components: usize,
    /// Step index after the transition.
    pub t: usize,
}

#[derive(Clone, Debug)]
pub struct EpisodeRollout {
    pub scenario_id: String,
    pub t_max: usize,
    pub t_e: f64,
    pub converged: bool,
    pub steps: Vec<StepRecord>,
    /// Value after the final step per agent; zero when the episode ended.
    pub bootstrap: Vec<f64>,
}

impl EpisodeRollout {
    /// Mean over agents of the summed training reward.
    pub fn mean_return(&self) -> f64 {
        let n = self.steps.first().map_or(0, |s| s.agents.len());
        if n == 0 {
            return 0.0;
        }
        self.steps.iter().flat_map(|s| &s.agents).map(|a| a.total).sum::<f64>() / n as f64
    }
}

/// Distances from every alive agent to the alive agents within `d_comm`,
/// in alive-index order.
pub fn neighbor_distances(state: &SwarmState, d_comm: f64) -> Vec<Vec<f64>> {
    let alive: Vec<usize> = state.alive_indices().collect();
    alive
        .iter()
        .map(|&i| {
            alive.iter().filter(|&&j| j != i).map(|&j| state.positions[i].dist(state.positions[j])).filter(|&d| d <= d_comm).collect()
        })
        .collect()
}

/// Per-agent environment return (no imitation term) of a deterministic
/// episode, plus whether it converged.
pub fn evaluate_episode(
    actor: &Actor,
    scenario: &Scenario,
    perception: &PerceptionConfig,
    reward: &RewardConfig,
    t_e: f64,
    seed: u64,
) -> Result<(f64, bool, usize)> {
    let mut env = Env::new(scenario, perception.clone(), 0.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.state.alive_count() as f64;
    let mut total = 0.0;
    while !env.connected() && env.t() < scenario.t_max {
        let obs = env.observe()?;
        let batch = GraphBatch::from_local(&obs.iter().map(|(_, g)| g).collect::<Vec<_>>())?;
        let out = actor.act_batch(&batch, ActMode::Deterministic, &mut rng).map_err(|e| relabel(e, &env, &obs))?;
        let acts: Vec<Vec2> = out.iter().map(|o| o.action).collect();
        let full = env.scatter(&obs, &acts)?;
        env.advance(&full)?;
        for d in neighbor_distances(&env.state, scenario.d_comm) {
            let ctx =
                RewardContext { neighbor_distances: &d, score: None, components: env.components(), t: env.t(), t_max: scenario.t_max, t_e };
            total += synthesize_reward(&ctx, &RewardConfig { w_il: 0.0, ..reward.clone() }).total_clipped;
        }
    }
    Ok((total / n, env.connected(), env.t()))
}

fn relabel(e: Error, env: &Env, obs: &[(usize, LocalGraph)]) -> Error {
    match e {
        Error::PolicyFault { agent, .. } => Error::PolicyFault { t: env.t(), agent: obs.get(agent).map_or(agent, |o| o.0) },
        other => other,
    }
}

/// Runs one stochastic episode and records every agent's transition.
/// Rewards are filled in later by [`RolloutBuffer::seal`].
pub fn collect_episode(
    actor: &Actor,
    critic: &Critic,
    scenario: &Scenario,
    perception: &PerceptionConfig,
    t_e: f64,
    horizon: Option<usize>,
    seed: u64,
) -> Result<EpisodeRollout> {
    let mut env = Env::new(scenario, perception.clone(), 0.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = horizon.map_or(scenario.t_max, |h| h.min(scenario.t_max));
    let mut steps = Vec::new();
    while !env.connected() && env.t() < horizon {
        let obs = env.observe()?;
        let swarm = env.swarm_graph();
        let batch = GraphBatch::from_local(&obs.iter().map(|(_, g)| g).collect::<Vec<_>>())?;
        let out = actor.act_batch(&batch, ActMode::Stochastic, &mut rng).map_err(|e| relabel(e, &env, &obs))?;
        let values = critic.values(&GraphBatch::from_swarm(&[&swarm])?)?;
        let acts: Vec<Vec2> = out.iter().map(|o| o.action).collect();
        let full = env.scatter(&obs, &acts)?;
        env.advance(&full)?;
        let dists = neighbor_distances(&env.state, scenario.d_comm);
        let agents = obs
            .into_iter()
            .zip(out)
            .zip(values)
            .zip(dists)
            .map(|((((agent, graph), o), value), neighbor_distances)| AgentSample {
                agent,
                graph,
                pre_tanh: o.pre_tanh,
                action: o.action,
                log_prob: o.log_prob,
                value,
                neighbor_distances,
                reward: RewardBreakdown::default(),
                total: 0.0,
                done: false,
                advantage: 0.0,
                target: 0.0,
            })
            .collect();
        steps.push(StepRecord { swarm, agents, components: env.components(), t: env.t() });
    }
    let ended = env.connected() || env.t() >= scenario.t_max;
    let n_alive = env.state.alive_count();
    let bootstrap =
        if ended || steps.is_empty() { vec![0.0; n_alive] } else { critic.values(&GraphBatch::from_swarm(&[&env.swarm_graph()])?)? };
    if ended {
        if let Some(last) = steps.last_mut() {
            last.agents.iter_mut().for_each(|a| a.done = true);
        }
    }
    Ok(EpisodeRollout { scenario_id: scenario.id.clone(), t_max: scenario.t_max, t_e, converged: env.connected(), steps, bootstrap })
}

/// Transitions from every environment of one epoch.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub episodes: Vec<EpisodeRollout>,
    sealed: bool,
}

impl RolloutBuffer {
    pub fn new(episodes: Vec<EpisodeRollout>) -> Self {
        RolloutBuffer { episodes, sealed: false }
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().flat_map(|e| &e.steps).map(|s| s.agents.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples in (episode, step, agent) order.
    pub fn samples(&self) -> impl Iterator<Item = &AgentSample> {
        self.episodes.iter().flat_map(|e| &e.steps).flat_map(|s| &s.agents)
    }

    /// `(episode, step)` of every stored state.
    pub fn state_index(&self) -> Vec<(usize, usize)> {
        self.episodes.iter().enumerate().flat_map(|(e, ep)| (0..ep.steps.len()).map(move |s| (e, s))).collect()
    }

    /// Fills in rewards, runs GAE per agent stream and normalizes the
    /// advantages over the whole buffer. `scores` holds one discriminator
    /// score per sample in [`samples`](Self::samples) order, or `None` to
    /// skip the imitation term.
    pub fn seal(
        &mut self,
        scores: Option<&[f64]>,
        reward: &RewardConfig,
        gamma: f64,
        lambda: f64,
        mut norm: Option<&mut RunningNorm>,
    ) -> Result<()> {
        if self.sealed {
            return Err(Error::contract("rollout buffer is already sealed"));
        }
        if let Some(s) = scores {
            if s.len() != self.len() {
                return Err(Error::DimensionMismatch { context: "discriminator scores", expected: self.len(), got: s.len() });
            }
        }
        let mut k = 0;
        for ep in &mut self.episodes {
            for step in &mut ep.steps {
                for a in &mut step.agents {
                    let ctx = RewardContext {
                        neighbor_distances: &a.neighbor_distances,
                        score: scores.map(|s| s[k]),
                        components: step.components,
                        t: step.t,
                        t_max: ep.t_max,
                        t_e: ep.t_e,
                    };
                    a.reward = synthesize_reward(&ctx, reward);
                    a.total = match norm.as_deref_mut() {
                        Some(n) => {
                            let raw = reward.w_il * a.reward.gail + a.reward.step + a.reward.safety + a.reward.terminal;
                            n.update(raw);
                            n.normalize(raw).clamp(-reward.r_max, reward.r_max)
                        }
                        None => a.reward.total_clipped,
                    };
                    if !(a.total.abs() <= reward.r_max) {
                        return Err(Error::contract(format!("reward {} escaped the clip range", a.total)));
                    }
                    k += 1;
                }
            }
        }
        for ep in &mut self.episodes {
            let n_agents = ep.steps.first().map_or(0, |s| s.agents.len());
            for j in 0..n_agents {
                if ep.steps.iter().any(|s| s.agents.len() != n_agents) {
                    return Err(Error::contract("agent streams are not aligned in time"));
                }
                let r: Vec<f64> = ep.steps.iter().map(|s| s.agents[j].total).collect();
                let v: Vec<f64> = ep.steps.iter().map(|s| s.agents[j].value).collect();
                let d: Vec<bool> = ep.steps.iter().map(|s| s.agents[j].done).collect();
                let (adv, tgt) = compute_gae(&r, &v, &d, ep.bootstrap.get(j).copied().unwrap_or(0.0), gamma, lambda)?;
                for (s, (a, t)) in ep.steps.iter_mut().zip(adv.into_iter().zip(tgt)) {
                    s.agents[j].advantage = a;
                    s.agents[j].target = t;
                }
            }
        }
        let mut adv: Vec<f64> = self.samples().map(|a| a.advantage).collect();
        normalize_advantages(&mut adv);
        let mut it = adv.into_iter();
        for a in self.episodes.iter_mut().flat_map(|e| &mut e.steps).flat_map(|s| &mut s.agents) {
            a.advantage = it.next().expect("one advantage per sample");
        }
        self.sealed = true;
        Ok(())
    }
}
