use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sim::defaults;
use crate::sim::graph::{comm_graph_of, components};

pub const SCENARIO_SCHEMA: &str = "swarmheal.scenario/v1";

/// A post-damage episode setup. Together with a policy and a seed it fully
/// determines an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub id: String,
    pub n_total: usize,
    pub map_width: f64,
    pub initial_positions: Vec<Vec2>,
    /// Sorted indices of the agents destroyed at `t0`.
    pub damage_set: Vec<usize>,
    pub virtual_center: Vec2,
    pub d_comm: f64,
    pub d_safe: f64,
    pub v_max: f64,
    pub dt: f64,
    pub t_max: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn survivors(&self) -> Vec<usize> {
        let mut dmg = vec![false; self.n_total];
        for &d in &self.damage_set {
            dmg[d] = true;
        }
        (0..self.n_total).filter(|&i| !dmg[i]).collect()
    }

    pub fn alive_mask(&self) -> Vec<bool> {
        let mut alive = vec![true; self.n_total];
        for &d in &self.damage_set {
            alive[d] = false;
        }
        alive
    }

    /// Number of survivor subnets at `t0`.
    pub fn initial_subnets(&self) -> usize {
        let g = comm_graph_of(&self.initial_positions, &self.alive_mask(), self.d_comm);
        components(&g.adjacency).0
    }

    /// Structural checks on a scenario read from disk or built by hand.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::config(format!("unknown scenario schema {:?}", self.schema)));
        }
        if self.initial_positions.len() != self.n_total || self.n_total < 2 {
            return Err(Error::config("initial_positions must hold n_total >= 2 entries"));
        }
        if self.damage_set.iter().any(|&d| d >= self.n_total) || self.damage_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("damage_set must be sorted unique agent indices"));
        }
        if !(self.d_comm > 0.0 && self.v_max > 0.0 && self.dt > 0.0 && self.map_width > 0.0) {
            return Err(Error::config("d_comm, v_max, dt and map_width must be positive"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let sc: Scenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        sc.validate()?;
        Ok(sc)
    }
}

/// Mission area side length for a swarm size. The tabulated sizes follow the
/// reference setup; other sizes scale with sqrt(N) from the 20-UAV map.
pub fn default_map_width(n: usize) -> f64 {
    match n {
        20 => 320.0,
        50 => 500.0,
        100 => 750.0,
        200 => 1000.0,
        500 => 1600.0,
        _ => (320.0 * (n as f64 / 20.0).sqrt()).round(),
    }
}

/// Episode horizon in steps: `round(0.8 W)`.
pub fn default_t_max(map_width: f64) -> usize {
    (0.8 * map_width).round() as usize
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Any split (N_s > 1) post-damage layout.
    #[default]
    Any,
    /// Exactly two subnets, every survivor within 2W/3 of the virtual center.
    Easy,
}

impl Tier {
    fn accepts(self, subnets: usize, positions: &[Vec2], survivors: &[usize], center: Vec2, width: f64) -> bool {
        match self {
            Tier::Any => subnets > 1,
            Tier::Easy => subnets == 2 && survivors.iter().all(|&i| positions[i].dist(center) <= 2.0 * width / 3.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n: usize,
    pub damage_ratio: f64,
    /// Defaults to [`default_map_width`].
    pub map_width: Option<f64>,
    pub seed: u64,
    pub d_comm: f64,
    pub d_safe: f64,
    pub v_max: f64,
    pub dt: f64,
    pub tier: Tier,
    /// Number of (layout, damage set) draws before giving up.
    pub budget: usize,
}

impl ScenarioParams {
    pub fn new(n: usize, damage_ratio: f64, seed: u64) -> Self {
        ScenarioParams {
            n,
            damage_ratio,
            map_width: None,
            seed,
            d_comm: defaults::D_COMM,
            d_safe: defaults::D_SAFE,
            v_max: defaults::V_MAX,
            dt: defaults::DT,
            tier: Tier::Any,
            budget: 5000,
        }
    }
}

/// Samples a split post-damage scenario with default physical constants.
pub fn generate_scenario(n: usize, damage_ratio: f64, map_width: f64, seed: u64) -> Result<Scenario> {
    let mut p = ScenarioParams::new(n, damage_ratio, seed);
    p.map_width = Some(map_width);
    generate_scenario_with(&p)
}

/// Samples an initially connected spaced layout, removes `round(rho N)`
/// agents uniformly, and rejection-samples until the survivors split into
/// subnets accepted by the tier.
pub fn generate_scenario_with(p: &ScenarioParams) -> Result<Scenario> {
    if !(p.damage_ratio > 0.0 && p.damage_ratio < 1.0) {
        return Err(Error::config(format!("damage ratio {} outside (0, 1)", p.damage_ratio)));
    }
    let n_damaged = (p.damage_ratio * p.n as f64).round() as usize;
    let survivors = p.n.saturating_sub(n_damaged);
    if survivors < 2 {
        return Err(Error::TooFewSurvivors { survivors });
    }
    let width = p.map_width.unwrap_or_else(|| default_map_width(p.n));
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    for _ in 0..p.budget {
        let Some(positions) = connected_layout(&mut rng, p.n, width, p.d_safe, p.d_comm) else {
            continue;
        };
        let center = positions.iter().fold(Vec2::ZERO, |acc, &q| acc + q) * (1.0 / p.n as f64);
        let mut damage_set = sample(&mut rng, p.n, n_damaged).into_vec();
        damage_set.sort_unstable();
        let mut alive = vec![true; p.n];
        for &d in &damage_set {
            alive[d] = false;
        }
        let g = comm_graph_of(&positions, &alive, p.d_comm);
        let subnets = components(&g.adjacency).0;
        if p.tier.accepts(subnets, &positions, &g.agents, center, width) {
            return Ok(Scenario {
                schema: SCENARIO_SCHEMA.to_string(),
                id: format!("n{}-r{:.2}-s{}", p.n, p.damage_ratio, p.seed),
                n_total: p.n,
                map_width: width,
                initial_positions: positions,
                damage_set,
                virtual_center: center,
                d_comm: p.d_comm,
                d_safe: p.d_safe,
                v_max: p.v_max,
                dt: p.dt,
                t_max: default_t_max(width),
                seed: p.seed,
            });
        }
    }
    Err(Error::GenerationFailed { budget: p.budget })
}

/// Sequential dart throwing inside `[0, W]^2`: each new point keeps at least
/// `d_safe` from all others and lies within `d_comm` of at least one earlier
/// point, so the layout is connected by construction.
fn connected_layout(rng: &mut ChaCha8Rng, n: usize, width: f64, d_safe: f64, d_comm: f64) -> Option<Vec<Vec2>> {
    const TRIES_PER_POINT: usize = 2000;
    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    pts.push(Vec2::new(rng.random_range(0.0..=width), rng.random_range(0.0..=width)));
    let (s2, c2) = (d_safe * d_safe, d_comm * d_comm);
    while pts.len() < n {
        let mut placed = false;
        for _ in 0..TRIES_PER_POINT {
            // Propose near a random existing point so dense maps stay cheap.
            let anchor = pts[rng.random_range(0..pts.len())];
            let q = Vec2::new(anchor.x + rng.random_range(-d_comm..=d_comm), anchor.y + rng.random_range(-d_comm..=d_comm));
            if q.x < 0.0 || q.y < 0.0 || q.x > width || q.y > width {
                continue;
            }
            let mut linked = false;
            let mut ok = true;
            for &o in &pts {
                let d2 = o.dist_sq(q);
                if d2 < s2 {
                    ok = false;
                    break;
                }
                linked |= d2 <= c2;
            }
            if ok && linked {
                pts.push(q);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_damage_on_twenty() {
        let sc = generate_scenario(20, 0.5, 320.0, 11).unwrap();
        assert_eq!(sc.survivors().len(), 10);
        assert!(sc.initial_subnets() >= 2);
        assert_eq!(sc.t_max, 256);
        sc.validate().unwrap();
    }

    #[test]
    fn too_few_survivors() {
        let err = generate_scenario(2, 0.5, 320.0, 1).unwrap_err();
        assert!(matches!(err, Error::TooFewSurvivors { survivors: 1 }));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_scenario(20, 0.5, 320.0, 99).unwrap();
        let b = generate_scenario(20, 0.5, 320.0, 99).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn layout_is_spaced_inside_map_and_initially_connected() {
        let sc = generate_scenario(30, 0.5, 400.0, 5).unwrap();
        let all_alive = vec![true; sc.n_total];
        let g = comm_graph_of(&sc.initial_positions, &all_alive, sc.d_comm);
        assert_eq!(components(&g.adjacency).0, 1);
        for (i, p) in sc.initial_positions.iter().enumerate() {
            assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= 400.0 && p.y <= 400.0);
            for q in &sc.initial_positions[i + 1..] {
                assert!(p.dist(*q) >= sc.d_safe);
            }
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        // Every pair on a 10 m map is within radio range, so no damage set can split it.
        let mut p = ScenarioParams::new(20, 0.5, 3);
        p.map_width = Some(10.0);
        p.d_safe = 1.0;
        p.budget = 7;
        assert!(matches!(generate_scenario_with(&p), Err(Error::GenerationFailed { budget: 7 })));
        p.damage_ratio = 1.5;
        assert!(matches!(generate_scenario_with(&p), Err(Error::Config(_))));
    }

    #[test]
    fn easy_tier_constraints_hold() {
        let mut p = ScenarioParams::new(20, 0.5, 21);
        p.tier = Tier::Easy;
        let sc = generate_scenario_with(&p).unwrap();
        assert_eq!(sc.initial_subnets(), 2);
        for i in sc.survivors() {
            assert!(sc.initial_positions[i].dist(sc.virtual_center) <= 2.0 * sc.map_width / 3.0);
        }
    }

    #[test]
    fn file_round_trip_is_exact() {
        let sc = generate_scenario(20, 0.5, 320.0, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        sc.save(&path).unwrap();
        assert_eq!(Scenario::load(&path).unwrap(), sc);
    }
}
