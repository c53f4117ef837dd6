//! Deterministic decentralized heuristics. Both read nothing but the
//! agent's own [`LocalGraph`], so they see exactly what a learned policy sees.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::perception::{build_local_graph, EdgeKind, LocalGraph, PerceptionConfig};
use crate::sim::{ActMode, Policy, Scenario, SwarmState};

/// Full speed toward the (observed) virtual center; zero within one step of it.
pub fn center_fly_action(g: &LocalGraph) -> Vec2 {
    let to_center = -g.ego_offset();
    let d = to_center.norm();
    if d <= g.meta.v_max * g.meta.dt {
        Vec2::ZERO
    } else {
        to_center * (g.meta.v_max / d)
    }
}

pub fn center_fly(agent: usize, state: &SwarmState, scenario: &Scenario) -> Vec2 {
    center_fly_action(&build_local_graph(agent, state, scenario, &PerceptionConfig::for_scenario(scenario)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// 1/s.
    pub attraction_gain: f64,
    /// m^2/s: repulsion speed at distance d is `gain / d^2`.
    pub repulsion_gain: f64,
    /// Only neighbors closer than this repel, meters.
    pub repulsion_radius: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig { attraction_gain: 0.5, repulsion_gain: 5000.0, repulsion_radius: 30.0 }
    }
}

impl HeuristicConfig {
    pub fn validate(&self, d_safe: f64) -> Result<()> {
        if !(self.attraction_gain >= 0.0 && self.repulsion_gain >= 0.0) {
            return Err(Error::config("heuristic gains must be non-negative"));
        }
        if !(self.repulsion_radius >= d_safe) {
            return Err(Error::config(format!("repulsion radius {} is below the safety distance {d_safe}", self.repulsion_radius)));
        }
        Ok(())
    }
}

/// Linear attraction to the center plus inverse-square repulsion from the
/// selected active neighbors inside the repulsion radius, clamped to `v_max`.
pub fn potential_field_action(g: &LocalGraph, cfg: &HeuristicConfig) -> Vec2 {
    let p = g.ego_offset();
    let mut v = -p * cfg.attraction_gain;
    let r2 = cfg.repulsion_radius * cfg.repulsion_radius;
    for e in g.edges.iter().filter(|e| e.dst == g.ego && e.kind == EdgeKind::ActiveActive) {
        let away = p - g.offset(e.src);
        let d2 = away.norm_sq();
        if d2 > 0.0 && d2 < r2 {
            v += away * (cfg.repulsion_gain / (d2 * d2.sqrt()));
        }
    }
    v.clamp_norm(g.meta.v_max)
}

pub fn potential_field(agent: usize, state: &SwarmState, scenario: &Scenario, cfg: &HeuristicConfig) -> Vec2 {
    potential_field_action(&build_local_graph(agent, state, scenario, &PerceptionConfig::for_scenario(scenario)), cfg)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CenterFly;

impl Policy for CenterFly {
    fn name(&self) -> String {
        "center-fly".into()
    }

    fn act(&self, graph: &LocalGraph, _: ActMode, _: &mut ChaCha8Rng) -> Vec2 {
        center_fly_action(graph)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PotentialField(pub HeuristicConfig);

impl Policy for PotentialField {
    fn name(&self) -> String {
        "potential-field".into()
    }

    fn act(&self, graph: &LocalGraph, _: ActMode, _: &mut ChaCha8Rng) -> Vec2 {
        potential_field_action(graph, &self.0)
    }
}

pub const HEURISTIC_NAMES: [&str; 2] = ["center-fly", "potential-field"];

pub fn heuristic(name: &str) -> Option<Box<dyn Policy>> {
    match name {
        "center-fly" => Some(Box::new(CenterFly)),
        "potential-field" => Some(Box::new(PotentialField::default())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SCENARIO_SCHEMA;

    fn scenario(points: &[(f64, f64)], center: (f64, f64)) -> Scenario {
        Scenario {
            schema: SCENARIO_SCHEMA.into(),
            id: "t".into(),
            n_total: points.len(),
            map_width: 320.0,
            initial_positions: points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            damage_set: vec![],
            virtual_center: Vec2::new(center.0, center.1),
            d_comm: 120.0,
            d_safe: 15.0,
            v_max: 10.0,
            dt: 0.1,
            t_max: 256,
            seed: 0,
        }
    }

    #[test]
    fn center_fly_examples() {
        let sc = scenario(&[(0.0, 0.0), (500.0, 0.0)], (0.0, 0.0));
        let st = SwarmState::from_scenario(&sc);
        assert_eq!(center_fly(0, &st, &sc), Vec2::ZERO);
        let sc = scenario(&[(100.0, 0.0), (900.0, 0.0)], (0.0, 0.0));
        let st = SwarmState::from_scenario(&sc);
        let v = center_fly(0, &st, &sc);
        assert!((v.x + 10.0).abs() < 1e-12 && v.y.abs() < 1e-12);
    }

    #[test]
    fn lone_agent_potential_field_points_like_center_fly() {
        let sc = scenario(&[(100.0, 50.0), (900.0, 0.0)], (0.0, 0.0));
        let st = SwarmState::from_scenario(&sc);
        let a = center_fly(0, &st, &sc);
        let b = potential_field(0, &st, &sc, &HeuristicConfig::default());
        assert!((a.x * b.y - a.y * b.x).abs() < 1e-9 && a.x * b.x + a.y * b.y > 0.0);
    }

    #[test]
    fn symmetric_neighbors_cancel() {
        let cfg = HeuristicConfig { attraction_gain: 0.0, ..Default::default() };
        let sc = scenario(&[(0.0, 0.0), (20.0, 0.0), (-20.0, 0.0)], (0.0, 0.0));
        let st = SwarmState::from_scenario(&sc);
        assert_eq!(potential_field(0, &st, &sc, &cfg), Vec2::ZERO);
    }

    #[test]
    fn close_neighbor_pushes_outward() {
        let cfg = HeuristicConfig { attraction_gain: 0.0, ..Default::default() };
        let sc = scenario(&[(0.0, 0.0), (20.0, 0.0)], (0.0, 0.0));
        let st = SwarmState::from_scenario(&sc);
        assert!(potential_field(0, &st, &sc, &cfg).x < 0.0);
        assert!(potential_field(1, &st, &sc, &cfg).x > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(HeuristicConfig::default().validate(15.0).is_ok());
        assert!(HeuristicConfig { repulsion_radius: 10.0, ..Default::default() }.validate(15.0).is_err());
        assert!(HeuristicConfig { attraction_gain: -1.0, ..Default::default() }.validate(15.0).is_err());
    }
}
