use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::gnn::{EncoderConfig, EncoderTape, GraphBatch, PhyGnn};
use crate::nn::{join, Activation, DenseNet, DenseSpec, Matrix, NetTape, Parameters, Tensor};
use crate::perception::LocalGraph;
use crate::sim::{ActMode, Policy};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogStdMode {
    /// One learnable value per action dimension.
    #[default]
    Constant,
    /// A second head on the ego embedding.
    Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorConfig {
    pub encoder: EncoderConfig,
    pub head_width: usize,
    #[serde(default)]
    pub log_std: LogStdMode,
    pub log_std_init: f64,
    pub v_max: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        ActorConfig {
            encoder: EncoderConfig::default(),
            head_width: 128,
            log_std: LogStdMode::Constant,
            log_std_init: 0.5f64.ln(),
            v_max: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LogStd {
    Constant(Tensor),
    Head(DenseNet),
}

/// Decentralized policy: encoder, mean head and a tanh-squashed Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub cfg: ActorConfig,
    pub encoder: PhyGnn,
    pub mean_head: DenseNet,
    pub log_std: LogStd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorOutput {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    /// Gaussian sample before squashing (equals `mean` when deterministic).
    pub pre_tanh: [f64; 2],
    /// `v_max * tanh(pre_tanh)`, in m/s.
    pub action: Vec2,
    /// Log-density of `action` (m/s coordinates), squash-corrected.
    pub log_prob: f64,
}

/// Outputs of a differentiable actor evaluation over a batch.
pub struct ActorEval {
    pub mean: Matrix,
    pub log_std: Matrix,
    tape: ActorTape,
}

struct ActorTape {
    enc: EncoderTape,
    emb: Matrix,
    mean: NetTape,
    log_std: Option<NetTape>,
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
fn log1m_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - crate::nn::softplus(-2.0 * u))
}

/// Gaussian log-density of `u` under `N(mean, exp(log_std)^2)`, per dimension summed.
pub fn gaussian_log_prob(u: [f64; 2], mean: [f64; 2], log_std: [f64; 2]) -> f64 {
    (0..2)
        .map(|k| {
            let z = (u[k] - mean[k]) * (-log_std[k]).exp();
            -0.5 * z * z - log_std[k] - 0.5 * LN_2PI
        })
        .sum()
}

/// Log-density of the squashed action `v_max * tanh(u)`.
pub fn squashed_log_prob(u: [f64; 2], mean: [f64; 2], log_std: [f64; 2], v_max: f64) -> f64 {
    gaussian_log_prob(u, mean, log_std) - (0..2).map(|k| v_max.ln() + log1m_tanh_sq(u[k])).sum::<f64>()
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: [f64; 2]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (LN_2PI + 1.0)).sum()
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(cfg: &ActorConfig, rng: &mut R) -> Result<Self> {
        if !(cfg.v_max > 0.0) || cfg.head_width == 0 {
            return Err(Error::config("actor needs v_max > 0 and a positive head width"));
        }
        let encoder = PhyGnn::new(&cfg.encoder, rng)?;
        let d = cfg.encoder.hidden;
        let head = DenseSpec::mlp(d, cfg.head_width, 2, 2, Activation::Relu, Activation::Identity);
        let mean_head = DenseNet::new(&head, rng);
        let log_std = match cfg.log_std {
            LogStdMode::Constant => LogStd::Constant(Tensor::full(&[2], cfg.log_std_init)),
            LogStdMode::Head => {
                let mut net = DenseNet::new(&head, rng);
                let last = net.layers_mut().last_mut().expect("two layers");
                last.weight.fill(0.0);
                last.bias.fill(cfg.log_std_init);
                LogStd::Head(net)
            }
        };
        Ok(Actor { cfg: cfg.clone(), encoder, mean_head, log_std })
    }

    pub fn v_max(&self) -> f64 {
        self.cfg.v_max
    }

    /// Differentiable evaluation of the ego distributions.
    pub fn evaluate(&self, batch: &GraphBatch) -> Result<ActorEval> {
        let (h, enc) = self.encoder.forward(batch)?;
        let emb = h.gather_rows(&batch.readout);
        let (mean, mean_tape) = self.mean_head.forward(&emb)?;
        let (log_std, ls_tape) = match &self.log_std {
            LogStd::Constant(t) => {
                let mut m = Matrix::zeros(emb.rows(), 2);
                for r in 0..m.rows() {
                    m.row_mut(r).copy_from_slice(&t.values);
                }
                (m, None)
            }
            LogStd::Head(net) => {
                let (m, t) = net.forward(&emb)?;
                (m, Some(t))
            }
        };
        Ok(ActorEval { mean, log_std, tape: ActorTape { enc, emb, mean: mean_tape, log_std: ls_tape } })
    }

    /// Backpropagates `dL/dmean` and `dL/dlog_std` (both `B x 2`).
    pub fn backward(&self, batch: &GraphBatch, eval: &ActorEval, d_mean: &Matrix, d_log_std: &Matrix, grads: &mut Actor) -> Result<()> {
        let t = &eval.tape;
        let mut demb = self.mean_head.backward(&t.mean, d_mean, &mut grads.mean_head)?;
        match (&self.log_std, &mut grads.log_std) {
            (LogStd::Constant(_), LogStd::Constant(g)) => {
                for r in 0..d_log_std.rows() {
                    g.values[0] += d_log_std[(r, 0)];
                    g.values[1] += d_log_std[(r, 1)];
                }
            }
            (LogStd::Head(net), LogStd::Head(g)) => {
                demb.add_assign(&net.backward(t.log_std.as_ref().expect("head tape"), d_log_std, g)?);
            }
            _ => return Err(Error::contract("gradient buffer does not match the actor")),
        }
        debug_assert_eq!(demb.rows(), t.emb.rows());
        let mut dh = Matrix::zeros(batch.n_nodes(), self.encoder.hidden());
        dh.scatter_add_rows(&batch.readout, &demb);
        self.encoder.backward(batch, &t.enc, &dh, &mut grads.encoder)
    }

    /// Samples (or takes the mode of) the policy for every ego in the batch.
    pub fn act_batch(&self, batch: &GraphBatch, mode: ActMode, rng: &mut ChaCha8Rng) -> Result<Vec<ActorOutput>> {
        let eval = self.evaluate(batch)?;
        let v_max = self.cfg.v_max;
        let mut out = Vec::with_capacity(eval.mean.rows());
        for r in 0..eval.mean.rows() {
            let mean = [eval.mean[(r, 0)], eval.mean[(r, 1)]];
            let log_std = [eval.log_std[(r, 0)], eval.log_std[(r, 1)]];
            if !(mean.iter().chain(&log_std).all(|v| v.is_finite())) {
                return Err(Error::PolicyFault { t: 0, agent: r });
            }
            let u = match mode {
                ActMode::Deterministic => mean,
                ActMode::Stochastic => {
                    let e0: f64 = rng.sample(StandardNormal);
                    let e1: f64 = rng.sample(StandardNormal);
                    [mean[0] + log_std[0].exp() * e0, mean[1] + log_std[1].exp() * e1]
                }
            };
            out.push(ActorOutput {
                mean,
                log_std,
                pre_tanh: u,
                action: Vec2::new(v_max * u[0].tanh(), v_max * u[1].tanh()),
                log_prob: squashed_log_prob(u, mean, log_std, v_max),
            });
        }
        Ok(out)
    }

    pub fn act_graphs(&self, graphs: &[&LocalGraph], mode: ActMode, rng: &mut ChaCha8Rng) -> Result<Vec<ActorOutput>> {
        self.act_batch(&GraphBatch::from_local(graphs)?, mode, rng)
    }
}

impl Policy for Actor {
    fn name(&self) -> String {
        "phygail".into()
    }

    fn act(&self, graph: &LocalGraph, mode: ActMode, rng: &mut ChaCha8Rng) -> Vec2 {
        self.act_graphs(&[graph], mode, rng).map_or(Vec2::new(f64::NAN, f64::NAN), |o| o[0].action)
    }

    fn act_all(&self, graphs: &[(usize, LocalGraph)], mode: ActMode, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
        let refs: Vec<&LocalGraph> = graphs.iter().map(|(_, g)| g).collect();
        match self.act_graphs(&refs, mode, rng) {
            Ok(o) => o.into_iter().map(|o| o.action).collect(),
            // A NaN action makes the episode loop raise a policy fault.
            Err(_) => vec![Vec2::new(f64::NAN, f64::NAN); graphs.len()],
        }
    }
}

impl Parameters for Actor {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.mean_head.visit(&join(prefix, "mean_head"), f);
        match &self.log_std {
            LogStd::Constant(t) => t.visit(&join(prefix, "log_std"), f),
            LogStd::Head(n) => n.visit(&join(prefix, "log_std_head"), f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.mean_head.visit_mut(&join(prefix, "mean_head"), f);
        match &mut self.log_std {
            LogStd::Constant(t) => t.visit_mut(&join(prefix, "log_std"), f),
            LogStd::Head(n) => n.visit_mut(&join(prefix, "log_std_head"), f),
        }
    }
}
