use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::gnn::{EncoderConfig, EncoderTape, GraphBatch, PhyGnn};
use crate::nn::{join, sigmoid, Activation, DenseNet, DenseSpec, Matrix, NetTape, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub encoder: EncoderConfig,
    pub width: usize,
    pub v_max: f64,
    /// Start with a zero output layer so every score is exactly 0.5.
    #[serde(default)]
    pub zero_head: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { encoder: EncoderConfig::default(), width: 128, v_max: 10.0, zero_head: false }
    }
}

/// Scores (observation, action) pairs: near 1 for expert-like, near 0 for
/// policy-like. The head computes a logit; the score is its sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
    pub encoder: PhyGnn,
    pub action_net: DenseNet,
    pub head: DenseNet,
}

pub struct DiscEval {
    pub logits: Vec<f64>,
    enc: EncoderTape,
    act: NetTape,
    head: NetTape,
}

impl DiscEval {
    pub fn scores(&self) -> Vec<f64> {
        self.logits.iter().map(|&z| sigmoid(z)).collect()
    }
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: &DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        if !(cfg.v_max > 0.0) {
            return Err(Error::config("discriminator needs v_max > 0"));
        }
        let encoder = PhyGnn::new(&cfg.encoder, rng)?;
        let d = cfg.encoder.hidden;
        let action_net = DenseNet::new(&DenseSpec::mlp(2, cfg.width, d, 2, Activation::LeakyRelu, Activation::LeakyRelu), rng);
        let mut head = DenseNet::new(&DenseSpec::mlp(2 * d, cfg.width, 1, 2, Activation::LeakyRelu, Activation::Identity), rng);
        if cfg.zero_head {
            let last = head.layers_mut().last_mut().expect("two layers");
            last.weight.fill(0.0);
            last.bias.fill(0.0);
        }
        Ok(Discriminator { cfg: cfg.clone(), encoder, action_net, head })
    }

    /// Actions in m/s, divided by `v_max` before entering the action net.
    pub fn normalized_actions(&self, actions: &[Vec2]) -> Matrix {
        let s = 1.0 / self.cfg.v_max;
        Matrix::from_vec(actions.len(), 2, actions.iter().flat_map(|a| [a.x * s, a.y * s]).collect())
    }

    pub fn evaluate(&self, batch: &GraphBatch, actions: &[Vec2]) -> Result<DiscEval> {
        if actions.len() != batch.readout.len() {
            return Err(Error::DimensionMismatch { context: "discriminator actions", expected: batch.readout.len(), got: actions.len() });
        }
        if !actions.iter().all(|a| a.is_finite()) {
            return Err(Error::contract("discriminator action must be finite"));
        }
        let (h, enc) = self.encoder.forward(batch)?;
        let (za, act) = self.action_net.forward(&self.normalized_actions(actions))?;
        let zs = h.gather_rows(&batch.readout);
        let (logit, head) = self.head.forward(&Matrix::hcat(&[&zs, &za]))?;
        Ok(DiscEval { logits: logit.into_vec(), enc, act, head })
    }

    /// `D` in (0,1) for each pair.
    pub fn scores(&self, batch: &GraphBatch, actions: &[Vec2]) -> Result<Vec<f64>> {
        Ok(self.evaluate(batch, actions)?.scores())
    }

    /// Backpropagates `dL/dlogit` per pair.
    pub fn backward(&self, batch: &GraphBatch, eval: &DiscEval, d_logits: &[f64], grads: &mut Discriminator) -> Result<()> {
        let dl = Matrix::from_vec(d_logits.len(), 1, d_logits.to_vec());
        let din = self.head.backward(&eval.head, &dl, &mut grads.head)?;
        let d = self.encoder.hidden();
        let parts = din.hsplit(&[d, d]);
        self.action_net.backward(&eval.act, &parts[1], &mut grads.action_net)?;
        let mut dh = Matrix::zeros(batch.n_nodes(), d);
        dh.scatter_add_rows(&batch.readout, &parts[0]);
        self.encoder.backward(batch, &eval.enc, &dh, &mut grads.encoder)
    }
}

impl Parameters for Discriminator {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.action_net.visit(&join(prefix, "action_net"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.action_net.visit_mut(&join(prefix, "action_net"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
