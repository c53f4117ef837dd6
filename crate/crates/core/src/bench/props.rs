use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{GraphBatch, PhyGnn};
use crate::imitation::{speed_bonus, success_reward, RewardConfig};
use crate::perception::{Edge, EdgeKind, GraphMeta, LocalGraph, Node, NodeKind, ObservedWorld, Perceiver, PerceptionConfig, FEATURE_DIM};
use crate::sim::{connectivity, default_map_width, generate_scenario, Adjacency, SwarmState};
use crate::training::derive_seed;

/// Outcome of one property suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropReport {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `lhs / rhs` over all checked inequalities.
    pub worst_ratio: f64,
    pub details: serde_json::Value,
}

impl PropReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }
}

const REL_TOL: f64 = 1e-9;

// ---------------------------------------------------------------- connectivity

fn bfs_components(adj: &Adjacency) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in adj.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    count
}

/// Random graph on `2..=max_n` nodes: half Erdos-Renyi, half unit-disk.
pub fn random_graph(rng: &mut ChaCha8Rng, max_n: usize) -> Adjacency {
    let n = rng.random_range(2..=max_n.max(2));
    let mut edges = Vec::new();
    if rng.random_bool(0.5) {
        let p: f64 = rng.random_range(0.0..0.4);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
    } else {
        let r: f64 = rng.random_range(0.1..0.5);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        for i in 0..n {
            for j in i + 1..n {
                if (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1) <= r {
                    edges.push((i, j));
                }
            }
        }
    }
    Adjacency::from_edges(n, edges)
}

/// Spectral connectivity against breadth-first search: equal component
/// counts, no internal disagreement, and `lambda_2 > 1e-8` iff connected.
pub fn connectivity_oracle(n_graphs: usize, max_n: usize, seed: u64) -> PropReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut connected = 0;
    for _ in 0..n_graphs {
        let adj = random_graph(&mut rng, max_n);
        let want = bfs_components(&adj);
        let rep = connectivity(&adj);
        connected += usize::from(want == 1);
        if rep.n_components != want || rep.diagnostic.is_some() || (rep.fiedler > 1e-8) != (want == 1) {
            violations += 1;
        }
    }
    PropReport {
        name: "connectivity-oracle".into(),
        samples: n_graphs,
        violations,
        worst_ratio: 0.0,
        details: serde_json::json!({ "connected": connected, "max_n": max_n }),
    }
}

// ------------------------------------------------------------- spectral norm

/// Largest singular value by power iteration on `A^T A`.
pub fn spectral_norm_power(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let ata = a.transpose() * a;
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let y = &ata * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y);
        x = y / norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// `(max column sum, max row sum)` of a non-negative matrix.
fn one_and_inf_norms(a: &DMatrix<f64>) -> (f64, f64) {
    let one = a.column_iter().map(|c| c.sum()).fold(0.0, f64::max);
    let inf = a.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    (one, inf)
}

/// Composed perception adjacency: `a[dst][src] = 1` for every selection
/// edge, so row sums are in-degrees. With `physical_only` the virtual
/// center is dropped.
fn perception_matrix(edges: &[Edge], n: usize, center: Option<usize>, physical_only: bool) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for e in edges {
        if physical_only && (Some(e.src) == center || Some(e.dst) == center) {
            continue;
        }
        a[(e.dst, e.src)] = 1.0;
    }
    a
}

/// The spectral-norm bound on composed perception graphs from generated
/// scenarios, checked as
/// `power <= sqrt(|A|_1 |A|_inf) <= sqrt(delta_in_max * delta_out_max)`,
/// plus `sqrt(delta_in_max * C_pack)` on the physical part, with `C_pack`
/// the largest physical out-degree seen over the whole suite. Power
/// iteration is cross-checked against an SVD.
pub fn spectral_norm_suite(n_graphs: usize, k_act: usize, k_dmg: usize, seed: u64) -> Result<PropReport> {
    let sizes = [10usize, 20, 50, 100];
    let ratios = [0.25, 0.5, 0.75];
    let delta_in = (k_act + k_dmg + 1) as f64;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut max_svd_gap: f64 = 0.0;
    let mut physical = Vec::with_capacity(n_graphs);
    let mut max_in = 0.0f64;
    for k in 0..n_graphs {
        let n = sizes[k % sizes.len()];
        let rho = ratios[(k / sizes.len()) % ratios.len()];
        let sc = generate_scenario(n, rho, default_map_width(n), derive_seed(seed, 21, k as u64))?;
        let state = SwarmState::from_scenario(&sc);
        let cfg = PerceptionConfig::for_scenario(&sc).with_budgets(k_act, k_dmg);
        let world = ObservedWorld::exact(&state, sc.virtual_center);
        let g = Perceiver::new(&world, &cfg).swarm_graph();
        let center = g.nodes.iter().position(|n| n.kind == NodeKind::Center);
        let a = perception_matrix(&g.edges, g.nodes.len(), center, false);
        let (one, inf) = one_and_inf_norms(&a);
        max_in = max_in.max(inf);
        let power = spectral_norm_power(&a);
        let svd = a.singular_values().max();
        max_svd_gap = max_svd_gap.max((power - svd).abs() / svd.max(1.0));
        let mid = (one * inf).sqrt();
        let outer = (delta_in * one).sqrt();
        for (lhs, rhs) in [(power, mid), (mid, outer), (inf, delta_in)] {
            worst = worst.max(lhs / rhs);
            if lhs > rhs * (1.0 + REL_TOL) {
                violations += 1;
            }
        }
        if (power - svd).abs() > 1e-6 * svd.max(1.0) {
            violations += 1;
        }
        let p = perception_matrix(&g.edges, g.nodes.len(), center, true);
        physical.push((spectral_norm_power(&p), one_and_inf_norms(&p).0));
    }
    let c_pack = physical.iter().map(|p| p.1).fold(0.0, f64::max);
    let pack_bound = (delta_in * c_pack).sqrt();
    for &(norm, _) in &physical {
        worst = worst.max(norm / pack_bound);
        if norm > pack_bound * (1.0 + REL_TOL) {
            violations += 1;
        }
    }
    Ok(PropReport {
        name: "spectral-norm".into(),
        samples: n_graphs,
        violations,
        worst_ratio: worst,
        details: serde_json::json!({
            "delta_in_max": delta_in,
            "max_in_degree": max_in,
            "c_pack": c_pack,
            "max_power_svd_gap": max_svd_gap,
        }),
    })
}

// ------------------------------------------------------------ message bound

/// A random observation graph with features drawn from the compact input
/// box and every active node aggregating from at most `delta_in_max` nodes.
pub fn random_bounded_graph(rng: &mut ChaCha8Rng, delta_in_max: usize) -> LocalGraph {
    let n_nodes = rng.random_range(2..=delta_in_max + 1);
    let mut nodes: Vec<Node> = (0..n_nodes)
        .map(|k| {
            let kind = if k == 0 {
                NodeKind::Active
            } else if k == n_nodes - 1 {
                NodeKind::Center
            } else if rng.random_bool(0.7) {
                NodeKind::Active
            } else {
                NodeKind::Damaged
            };
            let mut x = [0.0; FEATURE_DIM];
            x[0] = rng.random_range(-1.5..=1.5);
            x[1] = rng.random_range(-1.5..=1.5);
            if kind == NodeKind::Active {
                let r: f64 = rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                x[2] = r * a.cos();
                x[3] = r * a.sin();
            }
            x[4] = rng.random_range(0.0..=1.0);
            Node { kind, agent: (kind != NodeKind::Center).then_some(k), x }
        })
        .collect();
    let mut edges = Vec::new();
    for dst in 0..n_nodes {
        if nodes[dst].kind != NodeKind::Active {
            continue;
        }
        let others = n_nodes - 1;
        // Saturate the budget often so the bound is probed near its worst case.
        let deg = if rng.random_bool(0.5) { others.min(delta_in_max) } else { rng.random_range(0..=others.min(delta_in_max)) };
        for s in sample(rng, others, deg).into_iter() {
            let src = if s >= dst { s + 1 } else { s };
            edges.push(Edge { src, dst, kind: EdgeKind::from_source(nodes[src].kind) });
        }
    }
    edges.sort_by_key(|e| (e.dst, e.src, e.kind));
    let mut indeg = vec![0usize; n_nodes];
    for e in &edges {
        indeg[e.dst] += 1;
    }
    for (node, d) in nodes.iter_mut().zip(&indeg) {
        if node.kind == NodeKind::Active && rng.random_bool(0.5) {
            node.x[4] = (*d as f64).ln_1p() / (delta_in_max as f64).ln_1p();
        }
    }
    LocalGraph { ego: 0, nodes, edges, meta: GraphMeta { w_scale: 1.0, v_max: 1.0, dt: 1.0, delta_in_max } }
}

struct LayerStats {
    c_f: f64,
    s_max: f64,
}

fn layer_stats(encoder: &PhyGnn, batch: &GraphBatch, stats: &mut [LayerStats]) -> Result<()> {
    let (_, tape) = encoder.forward(batch)?;
    for (s, layer) in stats.iter_mut().zip(&tape.layers) {
        for e in 0..layer.f.rows() {
            s.c_f = s.c_f.max(layer.f.row(e).iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let s_max = if layer.strength.is_empty() { 1.0 } else { layer.strength.iter().copied().fold(0.0, f64::max) };
        s.s_max = s.s_max.max(s_max);
    }
    Ok(())
}

/// The aggregated-message bound `|m_i| <= delta_in_max * S_max * C_f` per
/// layer, with `S_max` and `C_f` taken as maxima over a dense sample of
/// random bounded graphs and checked on `n_fresh` new ones.
pub fn message_bound_suite(encoder: &PhyGnn, delta_in_max: usize, n_dense: usize, n_fresh: usize, seed: u64) -> Result<PropReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = encoder.cfg.layers;
    let mut stats: Vec<LayerStats> = (0..layers).map(|_| LayerStats { c_f: 0.0, s_max: 0.0 }).collect();
    const CHUNK: usize = 256;
    let mut done = 0;
    while done < n_dense {
        let m = CHUNK.min(n_dense - done);
        let graphs: Vec<LocalGraph> = (0..m).map(|_| random_bounded_graph(&mut rng, delta_in_max)).collect();
        layer_stats(encoder, &GraphBatch::from_local(&graphs)?, &mut stats)?;
        done += m;
    }
    let bounds: Vec<f64> = stats.iter().map(|s| delta_in_max as f64 * s.s_max * s.c_f).collect();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut max_norm = vec![0.0f64; layers];
    let mut done = 0;
    while done < n_fresh {
        let m = CHUNK.min(n_fresh - done);
        let graphs: Vec<LocalGraph> = (0..m).map(|_| random_bounded_graph(&mut rng, delta_in_max)).collect();
        let (_, tape) = encoder.forward(&GraphBatch::from_local(&graphs)?)?;
        for (l, layer) in tape.layers.iter().enumerate() {
            for r in 0..layer.aggregated.rows() {
                let norm = layer.aggregated.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                max_norm[l] = max_norm[l].max(norm);
                if bounds[l] > 0.0 {
                    worst = worst.max(norm / bounds[l]);
                }
                if norm > bounds[l] * (1.0 + REL_TOL) {
                    violations += 1;
                }
            }
        }
        done += m;
    }
    Ok(PropReport {
        name: "message-bound".into(),
        samples: n_fresh,
        violations,
        worst_ratio: worst,
        details: serde_json::json!({
            "delta_in_max": delta_in_max,
            "dense_samples": n_dense,
            "c_f": stats.iter().map(|s| s.c_f).collect::<Vec<_>>(),
            "s_max": stats.iter().map(|s| s.s_max).collect::<Vec<_>>(),
            "bound": bounds,
            "max_message_norm": max_norm,
        }),
    })
}

// -------------------------------------------------------- success variance

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// Success-reward variance against `(r_time * eta_max)^2 / 4` (plus 1%)
/// under uniform completion times and under an adversarial two-point
/// distribution pinned at both ends of the reward range.
pub fn success_variance_suite(cfg: &RewardConfig, t_max: usize, n: usize, seed: u64) -> PropReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.25 * (cfg.r_time * cfg.eta_max).powi(2);
    let lo = cfg.r_base;
    let hi = cfg.r_base + cfg.r_time * cfg.eta_max;
    let mut out_of_range = 0;
    let mut draw = |t: f64, t_e: f64, out: &mut Vec<f64>| {
        let r = success_reward(t, t_e, cfg);
        let eta = speed_bonus(t, t_e, cfg);
        if !(r >= lo && r <= hi && eta > 0.0 && eta <= cfg.eta_max) {
            out_of_range += 1;
        }
        out.push(r);
    };
    let mut uniform = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.random_range(1..=t_max) as f64;
        let t_e = rng.random_range(1..=t_max) as f64;
        draw(t, t_e, &mut uniform);
    }
    let mut adversarial = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random_bool(0.5) {
            draw(1.0, t_max as f64, &mut adversarial);
        } else {
            draw(t_max as f64, 1.0, &mut adversarial);
        }
    }
    let vu = population_variance(&uniform);
    let va = population_variance(&adversarial);
    let limit = bound * 1.01;
    let violations = out_of_range + usize::from(vu > limit) + usize::from(va > limit);
    PropReport {
        name: "success-variance".into(),
        samples: 2 * n,
        violations,
        worst_ratio: vu.max(va) / bound,
        details: serde_json::json!({
            "bound": bound,
            "uniform_variance": vu,
            "adversarial_variance": va,
            "out_of_range": out_of_range,
        }),
    }
}

// ------------------------------------------------------------------- driver

/// Sample counts for the full property run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropsSpec {
    pub connectivity_graphs: usize,
    pub connectivity_max_n: usize,
    pub spectral_graphs: usize,
    pub message_dense: usize,
    pub message_fresh: usize,
    pub variance_samples: usize,
    pub variance_t_max: usize,
    pub k_act: usize,
    pub k_dmg: usize,
    pub reward: RewardConfig,
    pub seed: u64,
}

impl Default for PropsSpec {
    fn default() -> Self {
        PropsSpec {
            connectivity_graphs: 1000,
            connectivity_max_n: 30,
            spectral_graphs: 500,
            message_dense: 20_000,
            message_fresh: 10_000,
            variance_samples: 100_000,
            variance_t_max: 256,
            k_act: PerceptionConfig::DEFAULT_K_ACT,
            k_dmg: PerceptionConfig::DEFAULT_K_DMG,
            reward: RewardConfig::default(),
            seed: 0,
        }
    }
}

impl PropsSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.connectivity_graphs, self.spectral_graphs, self.message_dense, self.message_fresh, self.variance_samples];
        if counts.contains(&0) || self.connectivity_max_n < 2 || self.variance_t_max == 0 || self.k_act == 0 {
            return Err(Error::config("property sample counts must be positive"));
        }
        self.reward.validate()
    }
}

/// Runs every suite in a fixed order: connectivity, spectral norm,
/// message bound (on `encoder`) and success variance.
pub fn run_props(spec: &PropsSpec, encoder: &PhyGnn) -> Result<Vec<PropReport>> {
    spec.validate()?;
    Ok(vec![
        connectivity_oracle(spec.connectivity_graphs, spec.connectivity_max_n, derive_seed(spec.seed, 21, 0)),
        spectral_norm_suite(spec.spectral_graphs, spec.k_act, spec.k_dmg, derive_seed(spec.seed, 21, 1))?,
        message_bound_suite(encoder, spec.k_act + spec.k_dmg + 1, spec.message_dense, spec.message_fresh, derive_seed(spec.seed, 21, 2))?,
        success_variance_suite(&spec.reward, spec.variance_t_max, spec.variance_samples, derive_seed(spec.seed, 21, 3)),
    ])
}
