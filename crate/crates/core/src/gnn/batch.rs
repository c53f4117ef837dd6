use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::perception::{EdgeKind, LocalGraph, Node, NodeKind, SwarmGraph, FEATURE_DIM};

/// Several graphs packed into one disjoint union. Edges are sorted by
/// `(dst, src, kind)` so aggregation order never depends on input order.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub x: Matrix,
    pub kinds: Vec<NodeKind>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge_kinds: Vec<EdgeKind>,
    /// Node offsets: graph `g` owns nodes `graph_ptr[g]..graph_ptr[g + 1]`.
    pub graph_ptr: Vec<usize>,
    /// Nodes whose embeddings are read out (egos, or all active agents).
    pub readout: Vec<usize>,
    /// Graph index of each readout node.
    pub readout_graph: Vec<usize>,
}

struct Builder {
    x: Vec<f64>,
    kinds: Vec<NodeKind>,
    edges: Vec<(usize, usize, EdgeKind)>,
    graph_ptr: Vec<usize>,
    readout: Vec<usize>,
    readout_graph: Vec<usize>,
}

impl Builder {
    fn new() -> Self {
        Builder { x: vec![], kinds: vec![], edges: vec![], graph_ptr: vec![0], readout: vec![], readout_graph: vec![] }
    }

    fn push(
        &mut self,
        nodes: &[Node],
        edges: impl Iterator<Item = (usize, usize, EdgeKind)>,
        readout: impl Iterator<Item = usize>,
    ) -> Result<()> {
        let off = self.kinds.len();
        let g = self.graph_ptr.len() - 1;
        for n in nodes {
            if !n.x.iter().all(|v| v.is_finite()) {
                return Err(Error::contract("non-finite node feature"));
            }
            self.x.extend_from_slice(&n.x);
            self.kinds.push(n.kind);
        }
        for (s, d, k) in edges {
            if s >= nodes.len() || d >= nodes.len() {
                return Err(Error::contract(format!("edge {s}->{d} outside a graph of {} nodes", nodes.len())));
            }
            self.edges.push((s + off, d + off, k));
        }
        for r in readout {
            self.readout.push(r + off);
            self.readout_graph.push(g);
        }
        self.graph_ptr.push(self.kinds.len());
        Ok(())
    }

    fn finish(mut self) -> GraphBatch {
        self.edges.sort_by_key(|&(s, d, k)| (d, s, k));
        let n = self.kinds.len();
        GraphBatch {
            x: Matrix::from_vec(n, FEATURE_DIM, self.x),
            kinds: self.kinds,
            src: self.edges.iter().map(|e| e.0).collect(),
            dst: self.edges.iter().map(|e| e.1).collect(),
            edge_kinds: self.edges.iter().map(|e| e.2).collect(),
            graph_ptr: self.graph_ptr,
            readout: self.readout,
            readout_graph: self.readout_graph,
        }
    }
}

impl GraphBatch {
    /// One readout per graph: its ego.
    pub fn from_local<G: std::borrow::Borrow<LocalGraph>>(graphs: &[G]) -> Result<Self> {
        let mut b = Builder::new();
        for g in graphs {
            let g = g.borrow();
            if g.nodes.get(g.ego).map(|n| n.kind) != Some(NodeKind::Active) {
                return Err(Error::contract("observer node must be active"));
            }
            b.push(&g.nodes, g.edges.iter().map(|e| (e.src, e.dst, e.kind)), std::iter::once(g.ego))?;
        }
        Ok(b.finish())
    }

    /// Readouts are every active agent of every graph.
    pub fn from_swarm<G: std::borrow::Borrow<SwarmGraph>>(graphs: &[G]) -> Result<Self> {
        let mut b = Builder::new();
        for g in graphs {
            let g = g.borrow();
            b.push(&g.nodes, g.edges.iter().map(|e| (e.src, e.dst, e.kind)), g.active_nodes())?;
        }
        Ok(b.finish())
    }

    pub fn n_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn n_graphs(&self) -> usize {
        self.graph_ptr.len() - 1
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes()];
        for &t in &self.dst {
            d[t] += 1;
        }
        d
    }
}
