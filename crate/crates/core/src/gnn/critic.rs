use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{EncoderConfig, EncoderTape, GraphBatch, PhyGnn};
use crate::nn::{join, Activation, DenseNet, DenseSpec, Matrix, NetTape, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub encoder: EncoderConfig,
    pub head_width: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig { encoder: EncoderConfig::default(), head_width: 128 }
    }
}

/// Centralized value function: per-agent values from the agent's embedding
/// and mean/max pooling over the active agents of its graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub cfg: CriticConfig,
    pub encoder: PhyGnn,
    pub head: DenseNet,
}

pub struct CriticEval {
    pub values: Vec<f64>,
    enc: EncoderTape,
    head: NetTape,
    /// Per graph: readout positions (into `batch.readout`) it pools over.
    groups: Vec<Vec<usize>>,
    /// Per graph and channel: readout position holding the max.
    argmax: Vec<Vec<usize>>,
}

/// Mean and max over rows `members` of `emb`. Ties in the max go to the
/// earliest member.
pub fn masked_pool(emb: &Matrix, members: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let d = emb.cols();
    let mut mean = vec![0.0; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    let mut arg = vec![0; d];
    for &r in members {
        for (c, &v) in emb.row(r).iter().enumerate() {
            mean[c] += v;
            if v > max[c] {
                max[c] = v;
                arg[c] = r;
            }
        }
    }
    let n = members.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    (mean, max, arg)
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(cfg: &CriticConfig, rng: &mut R) -> Result<Self> {
        let encoder = PhyGnn::new(&cfg.encoder, rng)?;
        let d = cfg.encoder.hidden;
        let head = DenseNet::new(&DenseSpec::mlp(3 * d, cfg.head_width, 1, 2, Activation::Relu, Activation::Identity), rng);
        Ok(Critic { cfg: cfg.clone(), encoder, head })
    }

    /// Values for every readout node (active agent) of the batch.
    pub fn evaluate(&self, batch: &GraphBatch) -> Result<CriticEval> {
        let mut groups = vec![Vec::new(); batch.n_graphs()];
        for (pos, &g) in batch.readout_graph.iter().enumerate() {
            groups[g].push(pos);
        }
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::contract("critic needs at least one active node per graph"));
        }
        let (h, enc) = self.encoder.forward(batch)?;
        let emb = h.gather_rows(&batch.readout);
        let d = emb.cols();
        let mut input = Matrix::zeros(emb.rows(), 3 * d);
        let mut argmax = Vec::with_capacity(groups.len());
        for members in &groups {
            let (mean, max, arg) = masked_pool(&emb, members);
            for &r in members {
                let row = input.row_mut(r);
                row[..d].copy_from_slice(emb.row(r));
                row[d..2 * d].copy_from_slice(&mean);
                row[2 * d..].copy_from_slice(&max);
            }
            argmax.push(arg);
        }
        let (v, head) = self.head.forward(&input)?;
        Ok(CriticEval { values: v.into_vec(), enc, head, groups, argmax })
    }

    pub fn values(&self, batch: &GraphBatch) -> Result<Vec<f64>> {
        Ok(self.evaluate(batch)?.values)
    }

    /// Backpropagates `dL/dV` per readout.
    pub fn backward(&self, batch: &GraphBatch, eval: &CriticEval, d_values: &[f64], grads: &mut Critic) -> Result<()> {
        let dv = Matrix::from_vec(d_values.len(), 1, d_values.to_vec());
        let din = self.head.backward(&eval.head, &dv, &mut grads.head)?;
        let d = self.encoder.hidden();
        let mut demb = Matrix::zeros(din.rows(), d);
        for (members, arg) in eval.groups.iter().zip(&eval.argmax) {
            let n = members.len() as f64;
            let mut dmean = vec![0.0; d];
            let mut dmax = vec![0.0; d];
            for &r in members {
                let row = din.row(r);
                demb.row_mut(r).iter_mut().zip(&row[..d]).for_each(|(a, v)| *a += v);
                dmean.iter_mut().zip(&row[d..2 * d]).for_each(|(a, v)| *a += v);
                dmax.iter_mut().zip(&row[2 * d..]).for_each(|(a, v)| *a += v);
            }
            for &r in members {
                demb.row_mut(r).iter_mut().zip(&dmean).for_each(|(a, v)| *a += v / n);
            }
            for c in 0..d {
                demb[(arg[c], c)] += dmax[c];
            }
        }
        let mut dh = Matrix::zeros(batch.n_nodes(), d);
        dh.scatter_add_rows(&batch.readout, &demb);
        self.encoder.backward(batch, &eval.enc, &dh, &mut grads.encoder)
    }
}

impl Parameters for Critic {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
