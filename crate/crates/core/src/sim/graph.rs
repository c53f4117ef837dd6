//! Communication graph and its connectivity analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sim::SwarmState;
use crate::spatial::SpatialGrid;

/// Undirected simple graph stored as sorted neighbor lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency { neighbors: vec![Vec::new(); n] }
    }

    /// Builds from undirected edges; self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for l in &mut neighbors {
            l.sort_unstable();
            l.dedup();
        }
        Adjacency { neighbors }
    }

    /// Parses a square symmetric 0/1 matrix with zero diagonal.
    pub fn from_dense(m: &[Vec<u8>]) -> Result<Self> {
        let n = m.len();
        let mut edges = Vec::new();
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { context: "adjacency row", expected: n, got: row.len() });
            }
            for (j, &a) in row.iter().enumerate() {
                if a > 1 {
                    return Err(Error::contract(format!("adjacency entry ({i},{j}) = {a} is not 0/1")));
                }
                if a != m[j][i] {
                    return Err(Error::contract(format!("adjacency is not symmetric at ({i},{j})")));
                }
                if i == j && a != 0 {
                    return Err(Error::contract(format!("adjacency has a self-loop at {i}")));
                }
                if a == 1 && i < j {
                    edges.push((i, j));
                }
            }
        }
        Ok(Adjacency::from_edges(n, edges))
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut m = vec![vec![0u8; n]; n];
        for (i, l) in self.neighbors.iter().enumerate() {
            for &j in l {
                m[i][j] = 1;
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Graph Laplacian `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = DMatrix::zeros(n, n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            l[(i, i)] = nb.len() as f64;
            for &j in nb {
                l[(i, j)] = -1.0;
            }
        }
        l
    }
}

/// Communication graph over the alive agents. Local index `k` refers to
/// agent `agents[k]`.
#[derive(Clone, Debug)]
pub struct CommGraph {
    pub agents: Vec<usize>,
    pub adjacency: Adjacency,
}

/// Disk-model links between alive agents: `a_ij = 1` iff `|p_i - p_j| <= d_comm`.
pub fn comm_graph(state: &SwarmState, d_comm: f64) -> CommGraph {
    assert!(d_comm > 0.0, "d_comm must be positive");
    comm_graph_of(&state.positions, &state.alive, d_comm)
}

pub(crate) fn comm_graph_of(positions: &[Vec2], alive: &[bool], d_comm: f64) -> CommGraph {
    let agents: Vec<usize> = (0..positions.len()).filter(|&i| alive[i]).collect();
    let mut local = vec![usize::MAX; positions.len()];
    for (k, &a) in agents.iter().enumerate() {
        local[a] = k;
    }
    let grid = SpatialGrid::build(positions, d_comm, |i| alive[i]);
    let mut edges = Vec::new();
    for (k, &a) in agents.iter().enumerate() {
        grid.for_each_within(positions, positions[a], d_comm, |j, _| {
            let kj = local[j];
            if kj > k {
                edges.push((k, kj));
            }
        });
    }
    CommGraph { agents: agents.clone(), adjacency: Adjacency::from_edges(agents.len(), edges) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectralDiagnostic {
    /// The eigen-solver did not converge; counts come from union-find and
    /// `fiedler` is the sentinel 0 when disconnected.
    NonConvergence,
    /// Spectral and union-find component counts disagreed; union-find wins.
    CountMismatch { spectral: usize, union_find: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub n_components: usize,
    /// Second-smallest Laplacian eigenvalue, reported as exactly 0 whenever
    /// it falls under the zero tolerance. Graphs with fewer than two nodes
    /// report 0.
    pub fiedler: f64,
    pub component_labels: Vec<usize>,
    pub diagnostic: Option<SpectralDiagnostic>,
}

impl ConnectivityReport {
    pub fn is_connected(&self) -> bool {
        self.n_components == 1
    }
}

/// Relative zero tolerance on Laplacian eigenvalues.
pub const EIGEN_ZERO_TOL: f64 = 1e-8;

/// Spectral connectivity analysis with a union-find cross-check.
pub fn connectivity(adj: &Adjacency) -> ConnectivityReport {
    let (uf_count, labels) = components(adj);
    let n = adj.len();
    if n < 2 {
        return ConnectivityReport { n_components: uf_count, fiedler: 0.0, component_labels: labels, diagnostic: None };
    }
    let eig = SymmetricEigen::try_new(adj.laplacian(), 1e-14, 100 * n.max(10));
    let Some(eig) = eig else {
        let fiedler = 0.0;
        return ConnectivityReport {
            n_components: uf_count,
            fiedler,
            component_labels: labels,
            diagnostic: Some(SpectralDiagnostic::NonConvergence),
        };
    };
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let tol = EIGEN_ZERO_TOL * ev[n - 1].max(1.0);
    let zero_count = ev.iter().filter(|&&l| l <= tol).count();
    let fiedler = if ev[1] <= tol { 0.0 } else { ev[1] };
    let diagnostic = (zero_count != uf_count).then_some(SpectralDiagnostic::CountMismatch { spectral: zero_count, union_find: uf_count });
    ConnectivityReport { n_components: uf_count, fiedler, component_labels: labels, diagnostic }
}

/// Union-find component count and labels (labels numbered by first appearance).
pub fn components(adj: &Adjacency) -> (usize, Vec<usize>) {
    let n = adj.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for &j in adj.neighbors(i) {
            if j > i {
                uf.union(i, j);
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for (i, label) in labels.iter_mut().enumerate() {
        let r = uf.find(i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = count;
            count += 1;
        }
        *label = label_of_root[r];
    }
    (count, labels)
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(points: &[(f64, f64)]) -> SwarmState {
        SwarmState {
            positions: points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            velocities: vec![Vec2::ZERO; points.len()],
            alive: vec![true; points.len()],
            t: 0,
            dt: 0.1,
        }
    }

    #[test]
    fn link_at_exact_radius_is_present() {
        let g = comm_graph(&state(&[(0.0, 0.0), (120.0, 0.0)]), 120.0);
        assert!(g.adjacency.has_edge(0, 1));
    }

    #[test]
    fn single_agent_has_no_edges() {
        let g = comm_graph(&state(&[(3.0, 4.0)]), 120.0);
        assert_eq!(g.adjacency.edge_count(), 0);
    }

    #[test]
    fn three_agents_on_a_line() {
        let g = comm_graph(&state(&[(0.0, 0.0), (100.0, 0.0), (250.0, 0.0)]), 120.0);
        assert_eq!(g.adjacency.edge_count(), 1);
        assert!(g.adjacency.has_edge(0, 1));
    }

    #[test]
    fn dead_agents_are_excluded() {
        let mut s = state(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)]);
        s.alive[1] = false;
        let g = comm_graph(&s, 120.0);
        assert_eq!(g.agents, vec![0, 2]);
        assert!(g.adjacency.has_edge(0, 1));
    }

    #[test]
    fn path_graph_fiedler_is_one() {
        let r = connectivity(&Adjacency::from_edges(3, [(0, 1), (1, 2)]));
        assert_eq!(r.n_components, 1);
        assert!((r.fiedler - 1.0).abs() < 1e-12);
        assert_eq!(r.diagnostic, None);
    }

    #[test]
    fn empty_graph_has_n_components() {
        let r = connectivity(&Adjacency::empty(4));
        assert_eq!(r.n_components, 4);
        assert_eq!(r.fiedler, 0.0);
        assert_eq!(r.diagnostic, None);
    }

    #[test]
    fn two_disjoint_edges() {
        let r = connectivity(&Adjacency::from_edges(4, [(0, 1), (2, 3)]));
        assert_eq!(r.n_components, 2);
        assert_eq!(r.fiedler, 0.0);
        assert_eq!(r.component_labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn dense_round_trip_and_validation() {
        let a = Adjacency::from_edges(3, [(0, 2)]);
        assert_eq!(Adjacency::from_dense(&a.to_dense()).unwrap(), a);
        assert!(Adjacency::from_dense(&[vec![0, 1], vec![0, 0]]).is_err());
        assert!(Adjacency::from_dense(&[vec![0, 1]]).is_err());
    }
}
