//! Decentralized connectivity recovery for fragmented UAV swarm networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: disk-model swarm world, damage injection, connectivity analysis
//!   and the episode loop.
//! - [`perception`]: bounded directed K-NN observation graphs and their
//!   feature encoding.
//! - [`nn`]: dense layers with hand-written reverse-mode gradients, AdamW and
//!   the checkpoint format.
//! - [`gnn`]: the gated message-passing encoder and the actor, critic and
//!   discriminator heads built on it.
//! - [`baselines`]: deterministic heuristics used as baselines and experts.
//! - [`imitation`]: expert database, D4 augmentation and reward synthesis.
//! - [`training`]: rollout collection, GAE and the clipped-surrogate learner.
//! - [`bench`]: evaluation campaigns, structural property suites, noise sweeps
//!   and the per-agent latency benchmark.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod geom;
pub mod gnn;
pub mod imitation;
pub mod nn;
pub mod perception;
pub mod sim;
pub mod spatial;
pub mod training;

pub use error::{Error, Result};
pub use geom::Vec2;
