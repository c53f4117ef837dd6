//! Physics-gated graph encoder and the actor, critic and discriminator
//! built on it.

mod actor;
mod batch;
mod critic;
mod discriminator;
mod encoder;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use actor::{gaussian_entropy, gaussian_log_prob, squashed_log_prob, Actor, ActorConfig, ActorEval, ActorOutput, LogStd, LogStdMode};
pub use batch::GraphBatch;
pub use critic::{masked_pool, Critic, CriticConfig, CriticEval};
pub use discriminator::{DiscEval, Discriminator, DiscriminatorConfig};
pub use encoder::{Aggregation, EncoderConfig, EncoderTape, GateMode, LayerTrace, MessageLayer, PhyGnn};

use crate::error::{Error, Result};
use crate::nn::{checkpoint, join, Parameters, ParametersExt};

pub const MANIFEST_KIND: &str = "swarmheal.models/v1";

/// Architecture of the three networks; serialized as the checkpoint manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub actor: ActorConfig,
    pub critic: CriticConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    /// Same encoder shape everywhere with hidden width `hidden`.
    pub fn uniform(encoder: EncoderConfig, head_width: usize, v_max: f64) -> Self {
        ModelConfig {
            actor: ActorConfig { encoder: encoder.clone(), head_width, v_max, ..ActorConfig::default() },
            critic: CriticConfig { encoder: encoder.clone(), head_width },
            discriminator: DiscriminatorConfig { encoder, width: head_width, v_max, zero_head: false },
        }
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({ "kind": MANIFEST_KIND, "config": self })
    }

    pub fn from_manifest(manifest: &serde_json::Value) -> Result<Self> {
        if manifest.get("kind").and_then(|k| k.as_str()) != Some(MANIFEST_KIND) {
            return Err(Error::contract("manifest is not a model manifest"));
        }
        let cfg = manifest.get("config").cloned().ok_or_else(|| Error::contract("manifest has no config"))?;
        Ok(serde_json::from_value(cfg)?)
    }
}

/// All trainable networks of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub cfg: ModelConfig,
    pub actor: Actor,
    pub critic: Critic,
    pub discriminator: Discriminator,
}

impl Models {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Models {
            cfg: cfg.clone(),
            actor: Actor::new(&cfg.actor, &mut rng)?,
            critic: Critic::new(&cfg.critic, &mut rng)?,
            discriminator: Discriminator::new(&cfg.discriminator, &mut rng)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        checkpoint::save(path, self, &self.cfg.manifest(), extra)?;
        Ok(())
    }

    /// Rebuilds the architecture from the file's manifest and loads it.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, checkpoint::CheckpointHeader)> {
        let path = path.as_ref();
        let (header, _) = checkpoint::read(path)?;
        let cfg = ModelConfig::from_manifest(&header.manifest)
            .map_err(|e| Error::Incompatible { path: path.to_owned(), reason: e.to_string() })?;
        let mut models = Models::new(&cfg, 0)?;
        let header = checkpoint::load_into(path, &mut models, &cfg.manifest())?;
        Ok((models, header))
    }

    pub fn actor_param_count(&self) -> usize {
        self.actor.param_count()
    }
}

impl Parameters for Models {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.actor.visit(&join(prefix, "actor"), f);
        self.critic.visit(&join(prefix, "critic"), f);
        self.discriminator.visit(&join(prefix, "discriminator"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.actor.visit_mut(&join(prefix, "actor"), f);
        self.critic.visit_mut(&join(prefix, "critic"), f);
        self.discriminator.visit_mut(&join(prefix, "discriminator"), f);
    }
}
