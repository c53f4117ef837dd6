use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::GraphBatch;
use crate::nn::{join, Activation, DenseNet, DenseSpec, Matrix, NetTape, Parameters, Tensor};
use crate::perception::FEATURE_DIM;

/// Which gate terms enter the message coefficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    #[default]
    Both,
    /// Attraction gate forced to zero.
    NoAttraction,
    /// Repulsion gate forced to zero.
    NoRepulsion,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Gated, strength-scaled messages summed over in-edges.
    #[default]
    Physics,
    /// Plain message MLP output averaged over in-edges (GCN-like ablation).
    Mean,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub emb_dim: usize,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    #[serde(default)]
    pub gates: GateMode,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 128,
            layers: 3,
            emb_dim: 8,
            mlp_width: 128,
            mlp_depth: 2,
            gates: GateMode::Both,
            aggregation: Aggregation::Physics,
        }
    }
}

impl EncoderConfig {
    pub fn small(hidden: usize, layers: usize) -> Self {
        EncoderConfig { hidden, layers, mlp_width: hidden, emb_dim: 4.min(hidden), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden < 1 || self.mlp_width < 1 || self.mlp_depth < 1 {
            return Err(Error::config("encoder layers, hidden, mlp_width and mlp_depth must be positive"));
        }
        Ok(())
    }

    fn mlp(&self, input: usize, output: usize, last: Activation) -> DenseSpec {
        DenseSpec::mlp(input, self.mlp_width, output, self.mlp_depth, Activation::Relu, last)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessageLayer {
    pub msg: DenseNet,
    /// Absent under mean aggregation.
    pub gate: Option<DenseNet>,
    pub strength: Option<DenseNet>,
    pub update: DenseNet,
}

/// Physics-gated message-passing encoder over [`GraphBatch`]es.
#[derive(Clone, Debug, PartialEq)]
pub struct PhyGnn {
    pub cfg: EncoderConfig,
    pub node_emb: Tensor,
    pub edge_emb: Tensor,
    pub input: DenseNet,
    pub layers: Vec<MessageLayer>,
}

/// Per-layer, per-edge intermediate quantities.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub h_in: Matrix,
    /// `f` per edge.
    pub f: Matrix,
    /// `[w_att, w_rep]` per edge (after gate ablation); empty under mean aggregation.
    pub gates: Matrix,
    /// `S` per edge; empty under mean aggregation.
    pub strength: Vec<f64>,
    /// Scalar multiplying `f` into the edge message.
    pub coef: Vec<f64>,
    /// Aggregated message per node.
    pub aggregated: Matrix,
    msg_tape: NetTape,
    gate_tape: Option<NetTape>,
    strength_tape: Option<NetTape>,
    update_tape: NetTape,
}

#[derive(Clone, Debug)]
pub struct EncoderTape {
    input_tape: NetTape,
    pub layers: Vec<LayerTrace>,
}

impl PhyGnn {
    pub fn new<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (d, e) = (cfg.hidden, cfg.emb_dim);
        let emb = |rng: &mut R| {
            let mut t = Tensor::zeros(&[3, e]);
            t.values.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            t
        };
        let node_emb = emb(rng);
        let edge_emb = emb(rng);
        let input = DenseNet::new(&DenseSpec::new(&[FEATURE_DIM + e, d], &[Activation::Identity]), rng);
        let physics = cfg.aggregation == Aggregation::Physics;
        let layers = (0..cfg.layers)
            .map(|_| MessageLayer {
                msg: DenseNet::new(&cfg.mlp(2 * d + e, d, Activation::Identity), rng),
                gate: physics.then(|| DenseNet::new(&cfg.mlp(d, 2, Activation::Sigmoid), rng)),
                strength: physics.then(|| DenseNet::new(&cfg.mlp(d, 1, Activation::Softplus), rng)),
                update: DenseNet::new(&cfg.mlp(2 * d, d, Activation::Relu), rng),
            })
            .collect();
        Ok(PhyGnn { cfg: cfg.clone(), node_emb, edge_emb, input, layers })
    }

    pub fn hidden(&self) -> usize {
        self.cfg.hidden
    }

    fn input_rows(&self, b: &GraphBatch) -> Matrix {
        let e = self.cfg.emb_dim;
        let mut m = Matrix::zeros(b.n_nodes(), FEATURE_DIM + e);
        for i in 0..b.n_nodes() {
            let row = m.row_mut(i);
            row[..FEATURE_DIM].copy_from_slice(b.x.row(i));
            row[FEATURE_DIM..].copy_from_slice(self.node_emb.row(b.kinds[i].index()));
        }
        m
    }

    fn edge_inputs(&self, b: &GraphBatch, h: &Matrix) -> Matrix {
        let (d, e) = (self.cfg.hidden, self.cfg.emb_dim);
        let mut m = Matrix::zeros(b.n_edges(), 2 * d + e);
        for k in 0..b.n_edges() {
            let (hi, hj) = (h.row(b.dst[k]), h.row(b.src[k]));
            let row = m.row_mut(k);
            row[..d].copy_from_slice(hi);
            for c in 0..d {
                row[d + c] = hj[c] - hi[c];
            }
            row[2 * d..].copy_from_slice(self.edge_emb.row(b.edge_kinds[k].index()));
        }
        m
    }

    fn coefficients(&self, gates: &Matrix, strength: &Matrix) -> (Matrix, Vec<f64>) {
        let mut g = gates.clone();
        for r in 0..g.rows() {
            match self.cfg.gates {
                GateMode::Both => {}
                GateMode::NoAttraction => g[(r, 0)] = 0.0,
                GateMode::NoRepulsion => g[(r, 1)] = 0.0,
            }
        }
        let coef = (0..g.rows()).map(|r| strength[(r, 0)] * (g[(r, 0)] - g[(r, 1)])).collect();
        (g, coef)
    }

    /// Embeds every node of the batch; returns final hidden states and the tape.
    pub fn forward(&self, b: &GraphBatch) -> Result<(Matrix, EncoderTape)> {
        let (mut h, input_tape) = self.input.forward(&self.input_rows(b))?;
        let indeg = b.in_degrees();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (f, msg_tape) = layer.msg.forward(&self.edge_inputs(b, &h))?;
            let (gates, strength, coef, gate_tape, strength_tape) = match (&layer.gate, &layer.strength) {
                (Some(gn), Some(sn)) => {
                    let (g, gt) = gn.forward(&f)?;
                    let (s, st) = sn.forward(&f)?;
                    debug_assert!(g.data().iter().all(|v| (0.0..=1.0).contains(v)), "gate outside [0,1]");
                    debug_assert!(s.data().iter().all(|v| *v > 0.0), "non-positive strength");
                    let (g, coef) = self.coefficients(&g, &s);
                    (g, s.into_vec(), coef, Some(gt), Some(st))
                }
                _ => {
                    let coef = b.dst.iter().map(|&t| 1.0 / indeg[t] as f64).collect();
                    (Matrix::zeros(0, 2), Vec::new(), coef, None, None)
                }
            };
            let mut m = f.clone();
            for (r, c) in coef.iter().enumerate() {
                m.row_mut(r).iter_mut().for_each(|v| *v *= c);
            }
            let mut agg = Matrix::zeros(b.n_nodes(), self.cfg.hidden);
            agg.scatter_add_rows(&b.dst, &m);
            let (u, update_tape) = layer.update.forward(&Matrix::hcat(&[&h, &agg]))?;
            let mut h_next = u;
            h_next.add_assign(&h);
            traces.push(LayerTrace {
                h_in: std::mem::replace(&mut h, h_next),
                f,
                gates,
                strength,
                coef,
                aggregated: agg,
                msg_tape,
                gate_tape,
                strength_tape,
                update_tape,
            });
        }
        Ok((h, EncoderTape { input_tape, layers: traces }))
    }

    /// Forward pass keeping only the final embeddings.
    pub fn embed(&self, b: &GraphBatch) -> Result<Matrix> {
        Ok(self.forward(b)?.0)
    }

    /// Accumulates parameter gradients given `dL/dH_final`.
    pub fn backward(&self, b: &GraphBatch, tape: &EncoderTape, dh_out: &Matrix, grads: &mut PhyGnn) -> Result<()> {
        let (d, e) = (self.cfg.hidden, self.cfg.emb_dim);
        if tape.layers.len() != self.layers.len() || dh_out.shape() != (b.n_nodes(), d) {
            return Err(Error::contract("encoder tape or gradient does not match this batch"));
        }
        let mut dh = dh_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let tr = &tape.layers[k];
            let gl = &mut grads.layers[k];
            let dcat = layer.update.backward(&tr.update_tape, &dh, &mut gl.update)?;
            let parts = dcat.hsplit(&[d, d]);
            dh.add_assign(&parts[0]);
            let dagg = &parts[1];
            let dm = dagg.gather_rows(&b.dst);
            let mut df = dm.clone();
            for (r, c) in tr.coef.iter().enumerate() {
                df.row_mut(r).iter_mut().for_each(|v| *v *= c);
            }
            if let (Some(gn), Some(sn)) = (&layer.gate, &layer.strength) {
                let n = b.n_edges();
                let mut dgate = Matrix::zeros(n, 2);
                let mut ds = Matrix::zeros(n, 1);
                for r in 0..n {
                    let dcoef: f64 = dm.row(r).iter().zip(tr.f.row(r)).map(|(a, b)| a * b).sum();
                    let s = tr.strength[r];
                    ds[(r, 0)] = dcoef * (tr.gates[(r, 0)] - tr.gates[(r, 1)]);
                    if self.cfg.gates != GateMode::NoAttraction {
                        dgate[(r, 0)] = dcoef * s;
                    }
                    if self.cfg.gates != GateMode::NoRepulsion {
                        dgate[(r, 1)] = -dcoef * s;
                    }
                }
                let gate_grads = gl.gate.as_mut().expect("same architecture");
                df.add_assign(&gn.backward(tr.gate_tape.as_ref().expect("physics tape"), &dgate, gate_grads)?);
                let s_grads = gl.strength.as_mut().expect("same architecture");
                df.add_assign(&sn.backward(tr.strength_tape.as_ref().expect("physics tape"), &ds, s_grads)?);
            }
            let din = layer.msg.backward(&tr.msg_tape, &df, &mut gl.msg)?;
            let parts = din.hsplit(&[d, d, e]);
            let (dhi, ddiff, demb) = (&parts[0], &parts[1], &parts[2]);
            let mut to_dst = dhi.clone();
            to_dst.add_assign(&ddiff.map(|v| -v));
            dh.scatter_add_rows(&b.dst, &to_dst);
            dh.scatter_add_rows(&b.src, ddiff);
            for r in 0..b.n_edges() {
                let row = grads.edge_emb.row_mut(b.edge_kinds[r].index());
                row.iter_mut().zip(demb.row(r)).for_each(|(a, v)| *a += v);
            }
        }
        let din = self.input.backward(&tape.input_tape, &dh, &mut grads.input)?;
        for i in 0..b.n_nodes() {
            let row = grads.node_emb.row_mut(b.kinds[i].index());
            row.iter_mut().zip(&din.row(i)[FEATURE_DIM..]).for_each(|(a, v)| *a += v);
        }
        Ok(())
    }
}

impl Parameters for PhyGnn {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.node_emb.visit(&join(prefix, "node_emb"), f);
        self.edge_emb.visit(&join(prefix, "edge_emb"), f);
        self.input.visit(&join(prefix, "input"), f);
        for (k, l) in self.layers.iter().enumerate() {
            let p = join(prefix, &format!("layer{k}"));
            l.msg.visit(&join(&p, "msg"), f);
            if let Some(g) = &l.gate {
                g.visit(&join(&p, "gate"), f);
            }
            if let Some(s) = &l.strength {
                s.visit(&join(&p, "strength"), f);
            }
            l.update.visit(&join(&p, "update"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.node_emb.visit_mut(&join(prefix, "node_emb"), f);
        self.edge_emb.visit_mut(&join(prefix, "edge_emb"), f);
        self.input.visit_mut(&join(prefix, "input"), f);
        for (k, l) in self.layers.iter_mut().enumerate() {
            let p = join(prefix, &format!("layer{k}"));
            l.msg.visit_mut(&join(&p, "msg"), f);
            if let Some(g) = &mut l.gate {
                g.visit_mut(&join(&p, "gate"), f);
            }
            if let Some(s) = &mut l.strength {
                s.visit_mut(&join(&p, "strength"), f);
            }
            l.update.visit_mut(&join(&p, "update"), f);
        }
    }
}
