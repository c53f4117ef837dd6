//! Bounded heterogeneous local observation graphs.
//!
//! Each active agent pulls information from at most `k_act` nearest active
//! neighbors, `k_dmg` nearest damaged nodes and the shared virtual center, so
//! in-degrees are bounded by `k_act + k_dmg + 1` independent of swarm size.

mod build;
mod noise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sim::Scenario;

pub use build::{build_local_graph, encode_features, ObservedWorld, Perceiver, SwarmGraph};
pub use noise::{inject_position_noise, inject_position_noise_seeded};

/// Raw node feature width: relative position (2), velocity (2), degree (1).
pub const FEATURE_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Active = 0,
    Damaged = 1,
    Center = 2,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Active, NodeKind::Damaged, NodeKind::Center];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    ActiveActive = 0,
    DamagedActive = 1,
    CenterActive = 2,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::ActiveActive, EdgeKind::DamagedActive, EdgeKind::CenterActive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_source(kind: NodeKind) -> EdgeKind {
        match kind {
            NodeKind::Active => EdgeKind::ActiveActive,
            NodeKind::Damaged => EdgeKind::DamagedActive,
            NodeKind::Center => EdgeKind::CenterActive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Swarm index of the agent behind this node; `None` for the center.
    pub agent: Option<usize>,
    /// `[p~x, p~y, v~x, v~y, delta~]`.
    pub x: [f64; FEATURE_DIM],
}

/// Directed edge `src -> dst`: `dst` aggregates a message from `src`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Scales needed to turn encoded features back into physical quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub w_scale: f64,
    pub v_max: f64,
    pub dt: f64,
    pub delta_in_max: usize,
}

/// One agent's bounded directed observation graph. Node `ego` is the
/// observer; edges are sorted by `(dst, src, kind)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalGraph {
    pub ego: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub meta: GraphMeta,
}

impl LocalGraph {
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.dst] += 1;
        }
        d
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.src] += 1;
        }
        d
    }

    /// Ego position relative to the (observed) virtual center, in meters.
    pub fn ego_offset(&self) -> Vec2 {
        let x = &self.nodes[self.ego].x;
        Vec2::new(x[0], x[1]) * self.meta.w_scale
    }

    /// Position of node `k` relative to the center, in meters.
    pub fn offset(&self, k: usize) -> Vec2 {
        let x = &self.nodes[k].x;
        Vec2::new(x[0], x[1]) * self.meta.w_scale
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub k_act: usize,
    pub k_dmg: usize,
    pub w_scale: f64,
    pub d_comm: f64,
    pub v_max: f64,
    pub dt: f64,
    pub type_embedding_dim: usize,
}

impl PerceptionConfig {
    pub const DEFAULT_K_ACT: usize = 8;
    pub const DEFAULT_K_DMG: usize = 3;

    /// Default budgets with the scenario's map width as `w_scale`.
    pub fn for_scenario(sc: &Scenario) -> Self {
        PerceptionConfig {
            k_act: Self::DEFAULT_K_ACT,
            k_dmg: Self::DEFAULT_K_DMG,
            w_scale: sc.map_width,
            d_comm: sc.d_comm,
            v_max: sc.v_max,
            dt: sc.dt,
            type_embedding_dim: 8,
        }
    }

    pub fn with_budgets(mut self, k_act: usize, k_dmg: usize) -> Self {
        self.k_act = k_act;
        self.k_dmg = k_dmg;
        self
    }

    /// `k_act + k_dmg + 1`.
    pub fn delta_in_max(&self) -> usize {
        self.k_act + self.k_dmg + 1
    }

    pub fn meta(&self) -> GraphMeta {
        GraphMeta { w_scale: self.w_scale, v_max: self.v_max, dt: self.dt, delta_in_max: self.delta_in_max() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_act < 1 {
            return Err(Error::config("k_act must be at least 1"));
        }
        if !(self.w_scale > 0.0 && self.d_comm > 0.0 && self.v_max > 0.0) {
            return Err(Error::config("w_scale, d_comm and v_max must be positive"));
        }
        Ok(())
    }
}
