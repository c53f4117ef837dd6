//! Discrete-time planar swarm world.

mod episode;
mod graph;
mod scenario;
mod state;
pub mod trajectory_io;

pub use episode::{
    count_collisions, run_episode, survivor_components, ActMode, AgentStep, Env, EpisodeOptions, EpisodeResult, Policy, Trajectory,
};
pub(crate) use graph::comm_graph_of;
pub use graph::{comm_graph, components, connectivity, Adjacency, CommGraph, ConnectivityReport, SpectralDiagnostic};
pub use scenario::{default_map_width, generate_scenario, generate_scenario_with, Scenario, ScenarioParams, Tier, SCENARIO_SCHEMA};
pub use state::{step, SwarmState};

/// Physical constants of the simulated swarm.
pub mod defaults {
    pub const D_COMM: f64 = 120.0;
    pub const V_MAX: f64 = 10.0;
    pub const DT: f64 = 0.1;
    /// Minimum initial spacing and training safety margin.
    pub const D_SAFE: f64 = 15.0;
    /// Evaluation collision threshold (strictly below counts).
    pub const COLLISION_THRESHOLD: f64 = 10.0;
}
