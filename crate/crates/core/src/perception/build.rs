use crate::geom::Vec2;
use crate::perception::{Edge, EdgeKind, GraphMeta, LocalGraph, Node, NodeKind, PerceptionConfig, FEATURE_DIM};
use crate::sim::{Scenario, SwarmState};
use crate::spatial::SpatialGrid;

/// What the agents observe at one step: possibly perturbed positions and a
/// virtual-center reference per observer.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedWorld {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub alive: Vec<bool>,
    /// The shared reference used for centralized views.
    pub center: Vec2,
    /// Per-observer center estimates; `None` means everyone sees `center`.
    pub agent_centers: Option<Vec<Vec2>>,
}

impl ObservedWorld {
    pub fn exact(state: &SwarmState, center: Vec2) -> Self {
        ObservedWorld {
            positions: state.positions.clone(),
            velocities: state.velocities.clone(),
            alive: state.alive.clone(),
            center,
            agent_centers: None,
        }
    }

    pub fn center_for(&self, agent: usize) -> Vec2 {
        match &self.agent_centers {
            Some(c) => c[agent],
            None => self.center,
        }
    }
}

/// Encodes one node: position relative to the center over `w_scale`,
/// velocity over `v_max` (zero for damaged and center nodes), and
/// `ln(1 + delta) / ln(1 + delta_in_max)` of its in-degree.
pub fn encode_features(
    kind: NodeKind,
    position: Vec2,
    velocity: Vec2,
    center: Vec2,
    in_degree: usize,
    cfg: &PerceptionConfig,
) -> [f64; FEATURE_DIM] {
    let p = (position - center) * (1.0 / cfg.w_scale);
    let v = match kind {
        NodeKind::Active => velocity * (1.0 / cfg.v_max),
        NodeKind::Damaged | NodeKind::Center => Vec2::ZERO,
    };
    let delta = (in_degree as f64).ln_1p() / (cfg.delta_in_max() as f64).ln_1p();
    [p.x, p.y, v.x, v.y, delta]
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Selection {
    act: Vec<usize>,
    dmg: Vec<usize>,
}

/// K-NN perception over one observed world. Builds the spatial index once;
/// each per-agent query then touches only the 3x3 cell block around it.
pub struct Perceiver<'a> {
    world: &'a ObservedWorld,
    cfg: &'a PerceptionConfig,
    active: SpatialGrid,
    damaged: SpatialGrid,
}

/// Directed perception graph of the whole swarm: the union of every active
/// agent's selections. Used by the centralized critic.
#[derive(Clone, Debug, PartialEq)]
pub struct SwarmGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Swarm indices of the active agents, in node order `0..agents.len()`.
    pub agents: Vec<usize>,
    pub meta: GraphMeta,
}

impl SwarmGraph {
    pub fn active_nodes(&self) -> std::ops::Range<usize> {
        0..self.agents.len()
    }
}

impl<'a> Perceiver<'a> {
    pub fn new(world: &'a ObservedWorld, cfg: &'a PerceptionConfig) -> Self {
        let alive = &world.alive;
        Perceiver {
            world,
            cfg,
            active: SpatialGrid::build(&world.positions, cfg.d_comm, |i| alive[i]),
            damaged: SpatialGrid::build(&world.positions, cfg.d_comm, |i| !alive[i]),
        }
    }

    pub fn config(&self) -> &PerceptionConfig {
        self.cfg
    }

    fn nearest(&self, grid: &SpatialGrid, i: usize, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let p = self.world.positions[i];
        let mut cand: Vec<(f64, usize)> = Vec::new();
        grid.for_each_within(&self.world.positions, p, self.cfg.d_comm, |j, d2| {
            if j != i {
                cand.push((d2, j));
            }
        });
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand.into_iter().map(|(_, j)| j).collect()
    }

    fn select(&self, i: usize) -> Selection {
        Selection { act: self.nearest(&self.active, i, self.cfg.k_act), dmg: self.nearest(&self.damaged, i, self.cfg.k_dmg) }
    }

    /// Nearest selected active neighbors of agent `i` (ties to lower index).
    pub fn selected_active(&self, i: usize) -> Vec<usize> {
        self.nearest(&self.active, i, self.cfg.k_act)
    }

    /// Nearest selected damaged nodes of agent `i`.
    pub fn selected_damaged(&self, i: usize) -> Vec<usize> {
        self.nearest(&self.damaged, i, self.cfg.k_dmg)
    }

    /// Builds the observation graph of alive agent `ego`.
    pub fn local_graph(&self, ego: usize) -> LocalGraph {
        assert!(self.world.alive[ego], "observer {ego} is not alive");
        self.assemble(ego, &mut |i| self.select(i))
    }

    /// Observation graphs of every alive agent, reusing selections.
    pub fn local_graphs(&self) -> Vec<(usize, LocalGraph)> {
        let n = self.world.positions.len();
        let sels: Vec<Selection> = (0..n).map(|i| if self.world.alive[i] { self.select(i) } else { Selection::default() }).collect();
        (0..n).filter(|&i| self.world.alive[i]).map(|i| (i, self.assemble(i, &mut |j| sels[j].clone()))).collect()
    }

    fn assemble(&self, ego: usize, select: &mut dyn FnMut(usize) -> Selection) -> LocalGraph {
        let sel = select(ego);
        let mut agents: Vec<(usize, NodeKind)> = Vec::with_capacity(sel.act.len() + sel.dmg.len() + 1);
        agents.push((ego, NodeKind::Active));
        agents.extend(sel.act.iter().map(|&j| (j, NodeKind::Active)));
        agents.extend(sel.dmg.iter().map(|&j| (j, NodeKind::Damaged)));
        let center_node = agents.len();
        let local_of = |a: usize| agents.iter().position(|&(x, _)| x == a);

        let mut edges = Vec::new();
        let n_active = 1 + sel.act.len();
        for dst in 0..n_active {
            let agent = agents[dst].0;
            let s = if dst == 0 { sel.clone() } else { select(agent) };
            for &j in &s.act {
                if let Some(src) = local_of(j) {
                    edges.push(Edge { src, dst, kind: EdgeKind::ActiveActive });
                }
            }
            for &j in &s.dmg {
                if let Some(src) = local_of(j) {
                    edges.push(Edge { src, dst, kind: EdgeKind::DamagedActive });
                }
            }
            edges.push(Edge { src: center_node, dst, kind: EdgeKind::CenterActive });
        }
        edges.sort_by_key(|e| (e.dst, e.src, e.kind));

        let mut indeg = vec![0usize; center_node + 1];
        for e in &edges {
            indeg[e.dst] += 1;
        }
        let center = self.world.center_for(ego);
        let mut nodes: Vec<Node> = agents
            .iter()
            .enumerate()
            .map(|(k, &(a, kind))| Node {
                kind,
                agent: Some(a),
                x: encode_features(kind, self.world.positions[a], self.world.velocities[a], center, indeg[k], self.cfg),
            })
            .collect();
        nodes.push(Node {
            kind: NodeKind::Center,
            agent: None,
            x: encode_features(NodeKind::Center, center, Vec2::ZERO, center, indeg[center_node], self.cfg),
        });
        LocalGraph { ego: 0, nodes, edges, meta: self.cfg.meta() }
    }

    /// Union of all agents' perception graphs, relative to the shared center.
    pub fn swarm_graph(&self) -> SwarmGraph {
        let n = self.world.positions.len();
        let agents: Vec<usize> = (0..n).filter(|&i| self.world.alive[i]).collect();
        let sels: Vec<Selection> = agents.iter().map(|&i| self.select(i)).collect();
        let mut node_of = vec![usize::MAX; n];
        for (k, &a) in agents.iter().enumerate() {
            node_of[a] = k;
        }
        let mut damaged: Vec<usize> = sels.iter().flat_map(|s| s.dmg.iter().copied()).collect();
        damaged.sort_unstable();
        damaged.dedup();
        for (k, &d) in damaged.iter().enumerate() {
            node_of[d] = agents.len() + k;
        }
        let center_node = agents.len() + damaged.len();
        let mut edges = Vec::new();
        for (dst, s) in sels.iter().enumerate() {
            edges.extend(s.act.iter().map(|&j| Edge { src: node_of[j], dst, kind: EdgeKind::ActiveActive }));
            edges.extend(s.dmg.iter().map(|&j| Edge { src: node_of[j], dst, kind: EdgeKind::DamagedActive }));
            edges.push(Edge { src: center_node, dst, kind: EdgeKind::CenterActive });
        }
        edges.sort_by_key(|e| (e.dst, e.src, e.kind));
        let mut indeg = vec![0usize; center_node + 1];
        for e in &edges {
            indeg[e.dst] += 1;
        }
        let c = self.world.center;
        let mut nodes: Vec<Node> = Vec::with_capacity(center_node + 1);
        for (k, &a) in agents.iter().chain(damaged.iter()).enumerate() {
            let kind = if self.world.alive[a] { NodeKind::Active } else { NodeKind::Damaged };
            nodes.push(Node {
                kind,
                agent: Some(a),
                x: encode_features(kind, self.world.positions[a], self.world.velocities[a], c, indeg[k], self.cfg),
            });
        }
        nodes.push(Node { kind: NodeKind::Center, agent: None, x: encode_features(NodeKind::Center, c, Vec2::ZERO, c, 0, self.cfg) });
        SwarmGraph { nodes, edges, agents, meta: self.cfg.meta() }
    }
}

/// Noise-free observation graph of `agent` in `state`.
pub fn build_local_graph(agent: usize, state: &SwarmState, scenario: &Scenario, cfg: &PerceptionConfig) -> LocalGraph {
    let world = ObservedWorld::exact(state, scenario.virtual_center);
    Perceiver::new(&world, cfg).local_graph(agent)
}
