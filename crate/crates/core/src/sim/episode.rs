use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::perception::{inject_position_noise, LocalGraph, ObservedWorld, Perceiver, PerceptionConfig, SwarmGraph};
use crate::sim::{comm_graph_of, components};
use crate::sim::{Scenario, SwarmState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    #[default]
    Stochastic,
    Deterministic,
}

/// Maps one agent's observation graph to a velocity command.
pub trait Policy: Sync {
    fn name(&self) -> String;

    fn act(&self, graph: &LocalGraph, mode: ActMode, rng: &mut ChaCha8Rng) -> Vec2;

    /// Acts for all observers of one step, in the given order. Policies with
    /// batched inference override this.
    fn act_all(&self, graphs: &[(usize, LocalGraph)], mode: ActMode, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
        graphs.iter().map(|(_, g)| self.act(g, mode, rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    pub mode: ActMode,
    pub seed: u64,
    /// Localization noise std in meters; 0 disables it.
    pub noise_sigma: f64,
    /// Keep every agent's observation graph in the trajectory.
    pub record_observations: bool,
    /// Optional cap below the scenario horizon.
    pub max_steps: Option<usize>,
    /// Perception override; defaults to the scenario's.
    pub perception: Option<PerceptionConfig>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            mode: ActMode::Deterministic,
            seed: 0,
            noise_sigma: 0.0,
            record_observations: false,
            max_steps: None,
            perception: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub agent: usize,
    pub graph: LocalGraph,
    pub action: Vec2,
}

/// Time-ordered swarm states plus, optionally, the per-agent observation and
/// action records. `frames[t]` is the state at step `t`; its velocities are
/// the ones applied on the step into it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub frames: Vec<SwarmState>,
    pub steps: Vec<Vec<AgentStep>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: String,
    pub policy: String,
    pub converged: bool,
    /// Steps until a single survivor component; the horizon when not converged.
    pub recovery_steps: usize,
    pub recovery_time: f64,
    pub collisions_per_uav: f64,
    pub final_components: usize,
    pub trajectory: Trajectory,
}

/// Number of connected components among alive agents.
pub fn survivor_components(state: &SwarmState, d_comm: f64) -> usize {
    components(&comm_graph_of(&state.positions, &state.alive, d_comm).adjacency).0
}

/// Alive-pair proximity events with distance strictly below `threshold`,
/// summed over frames and divided by the survivor count.
pub fn count_collisions(frames: &[SwarmState], threshold: f64) -> f64 {
    assert!(threshold > 0.0, "collision threshold must be positive");
    let Some(first) = frames.first() else { return 0.0 };
    let survivors = first.alive_count();
    if survivors == 0 {
        return 0.0;
    }
    let t2 = threshold * threshold;
    let mut events = 0usize;
    for f in frames {
        let alive: Vec<usize> = f.alive_indices().collect();
        for (a, &i) in alive.iter().enumerate() {
            for &j in &alive[a + 1..] {
                if f.positions[i].dist_sq(f.positions[j]) < t2 {
                    events += 1;
                }
            }
        }
    }
    events as f64 / survivors as f64
}

/// One running episode: owns the true state and produces observations.
pub struct Env {
    pub scenario: Scenario,
    pub state: SwarmState,
    pub perception: PerceptionConfig,
    pub noise_sigma: f64,
    noise_rng: ChaCha8Rng,
    components: usize,
}

impl Env {
    pub fn new(scenario: &Scenario, perception: PerceptionConfig, noise_sigma: f64, noise_seed: u64) -> Result<Env> {
        scenario.validate()?;
        perception.validate()?;
        let state = SwarmState::from_scenario(scenario);
        let components = survivor_components(&state, scenario.d_comm);
        Ok(Env { scenario: scenario.clone(), state, perception, noise_sigma, noise_rng: ChaCha8Rng::seed_from_u64(noise_seed), components })
    }

    pub fn t(&self) -> usize {
        self.state.t
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn connected(&self) -> bool {
        self.components <= 1
    }

    /// What the agents perceive now; noise is drawn fresh on every call.
    pub fn observe_world(&mut self) -> Result<ObservedWorld> {
        let exact = ObservedWorld::exact(&self.state, self.scenario.virtual_center);
        inject_position_noise(&exact, self.noise_sigma, self.scenario.d_comm, &mut self.noise_rng)
    }

    /// Observation graphs of every alive agent, ordered by agent index.
    pub fn observe(&mut self) -> Result<Vec<(usize, LocalGraph)>> {
        let world = self.observe_world()?;
        Ok(Perceiver::new(&world, &self.perception).local_graphs())
    }

    /// Noise-free global graph for centralized value estimation.
    pub fn swarm_graph(&self) -> SwarmGraph {
        let world = ObservedWorld::exact(&self.state, self.scenario.virtual_center);
        Perceiver::new(&world, &self.perception).swarm_graph()
    }

    /// Applies one action per agent (dead agents' entries are ignored).
    pub fn advance(&mut self, actions: &[Vec2]) -> Result<()> {
        self.state = self.state.step(actions, self.scenario.v_max)?;
        self.components = survivor_components(&self.state, self.scenario.d_comm);
        Ok(())
    }

    /// Scatters per-observer actions into a full action vector, rejecting
    /// non-finite outputs.
    pub fn scatter(&self, observers: &[(usize, LocalGraph)], acts: &[Vec2]) -> Result<Vec<Vec2>> {
        if observers.len() != acts.len() {
            return Err(Error::DimensionMismatch { context: "policy actions", expected: observers.len(), got: acts.len() });
        }
        let mut full = vec![Vec2::ZERO; self.state.len()];
        for ((agent, _), a) in observers.iter().zip(acts) {
            if !a.is_finite() {
                return Err(Error::PolicyFault { t: self.state.t, agent: *agent });
            }
            full[*agent] = *a;
        }
        Ok(full)
    }
}

/// Runs `policy` on `scenario` until the survivors reconnect or the horizon
/// is reached.
pub fn run_episode(scenario: &Scenario, policy: &dyn Policy, opts: &EpisodeOptions) -> Result<EpisodeResult> {
    let perception = opts.perception.clone().unwrap_or_else(|| PerceptionConfig::for_scenario(scenario));
    let mut env = Env::new(scenario, perception, opts.noise_sigma, opts.seed ^ 0x6e_6f69_7365)?;
    let mut act_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let horizon = opts.max_steps.map_or(scenario.t_max, |m| m.min(scenario.t_max));
    let mut traj = Trajectory { frames: vec![env.state.clone()], steps: Vec::new() };
    while !env.connected() && env.t() < horizon {
        let observers = env.observe()?;
        let acts = policy.act_all(&observers, opts.mode, &mut act_rng);
        let full = env.scatter(&observers, &acts)?;
        env.advance(&full)?;
        if opts.record_observations {
            traj.steps.push(observers.into_iter().map(|(agent, graph)| AgentStep { agent, graph, action: full[agent] }).collect());
        }
        traj.frames.push(env.state.clone());
    }
    let converged = env.connected();
    let recovery_steps = if converged { env.t() } else { horizon };
    Ok(EpisodeResult {
        scenario_id: scenario.id.clone(),
        policy: policy.name(),
        converged,
        recovery_steps,
        recovery_time: recovery_steps as f64 * scenario.dt,
        collisions_per_uav: count_collisions(&traj.frames, crate::sim::defaults::COLLISION_THRESHOLD),
        final_components: env.components(),
        trajectory: traj,
    })
}
