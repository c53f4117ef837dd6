use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::Actor;
use crate::perception::{ObservedWorld, Perceiver, PerceptionConfig};
use crate::sim::{default_map_width, generate_scenario, ActMode, SwarmState};
use crate::training::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub n: usize,
    pub agents_timed: usize,
    /// Median seconds per agent for one local graph build plus one actor forward.
    pub median_secs: f64,
    pub max_nodes: usize,
    pub max_edges: usize,
    /// `median_secs / median_secs(N=20)`, when a 20-agent row exists.
    pub ratio_to_20: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleBenchSpec {
    pub sizes: Vec<usize>,
    pub damage_ratio: f64,
    /// Agents sampled per size.
    pub agents: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    pub k_act: usize,
    pub k_dmg: usize,
}

impl Default for ScaleBenchSpec {
    fn default() -> Self {
        ScaleBenchSpec {
            sizes: vec![20, 50, 100, 200],
            damage_ratio: 0.5,
            agents: 32,
            repeats: 15,
            warmup: 3,
            seed: 0,
            k_act: PerceptionConfig::DEFAULT_K_ACT,
            k_dmg: PerceptionConfig::DEFAULT_K_DMG,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median per-agent time of building each sampled agent's local graph and
/// running the actor on it. The spatial index is built once per world and
/// stands in for each UAV's own radio neighborhood discovery.
pub fn agent_latency(
    actor: &Actor,
    world: &ObservedWorld,
    cfg: &PerceptionConfig,
    agents: &[usize],
    repeats: usize,
    warmup: usize,
) -> Result<(f64, usize, usize)> {
    let perceiver = Perceiver::new(world, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut times = Vec::with_capacity(agents.len() * repeats);
    let (mut max_nodes, mut max_edges) = (0, 0);
    for &i in agents {
        for rep in 0..warmup + repeats {
            let t0 = Instant::now();
            let g = perceiver.local_graph(i);
            let out = actor.act_graphs(&[&g], ActMode::Deterministic, &mut rng)?;
            let dt = t0.elapsed().as_secs_f64();
            std::hint::black_box(out);
            max_nodes = max_nodes.max(g.nodes.len());
            max_edges = max_edges.max(g.edges.len());
            if rep >= warmup {
                times.push(dt);
            }
        }
    }
    if times.is_empty() {
        return Err(Error::config("scalebench needs at least one agent and one repeat"));
    }
    Ok((median(times), max_nodes, max_edges))
}

/// Per-agent latency at each swarm size on a fresh post-damage scenario.
pub fn scalebench(actor: &Actor, spec: &ScaleBenchSpec) -> Result<Vec<LatencyRow>> {
    let mut rows = Vec::new();
    for (k, &n) in spec.sizes.iter().enumerate() {
        let sc = generate_scenario(n, spec.damage_ratio, default_map_width(n), derive_seed(spec.seed, 31, k as u64))?;
        let state = SwarmState::from_scenario(&sc);
        let cfg = PerceptionConfig::for_scenario(&sc).with_budgets(spec.k_act, spec.k_dmg);
        let world = ObservedWorld::exact(&state, sc.virtual_center);
        let alive: Vec<usize> = state.alive_indices().collect();
        let stride = (alive.len() / spec.agents.max(1)).max(1);
        let agents: Vec<usize> = alive.iter().step_by(stride).take(spec.agents.max(1)).copied().collect();
        let (median_secs, max_nodes, max_edges) = agent_latency(actor, &world, &cfg, &agents, spec.repeats, spec.warmup)?;
        rows.push(LatencyRow { n, agents_timed: agents.len(), median_secs, max_nodes, max_edges, ratio_to_20: None });
    }
    if let Some(base) = rows.iter().find(|r| r.n == 20).map(|r| r.median_secs) {
        for r in &mut rows {
            r.ratio_to_20 = Some(r.median_secs / base);
        }
    }
    Ok(rows)
}
