//! Python bindings. Structured results cross the boundary as JSON strings;
//! decode them with `json.loads`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use swarmheal::bench::{self, CampaignSpec, PropsSpec};
use swarmheal::gnn::{ModelConfig, Models};
use swarmheal::sim::{self, EpisodeOptions, Scenario, ScenarioParams, SwarmState, Tier};
use swarmheal::Vec2;

fn to_py(e: swarmheal::Error) -> PyErr {
    match e {
        swarmheal::Error::Config(_) | swarmheal::Error::Json(_) | swarmheal::Error::Incompatible { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Post-damage scenario as JSON.
#[pyfunction]
#[pyo3(signature = (n, damage_ratio, seed, easy = false))]
fn generate_scenario(n: usize, damage_ratio: f64, seed: u64, easy: bool) -> PyResult<String> {
    let mut p = ScenarioParams::new(n, damage_ratio, seed);
    if easy {
        p.tier = Tier::Easy;
    }
    json(&sim::generate_scenario_with(&p).map_err(to_py)?)
}

/// Runs one deterministic episode and returns its summary (no trajectory).
#[pyfunction]
#[pyo3(signature = (scenario_json, policy = "center-fly", seed = 0, noise_sigma = 0.0, max_steps = None))]
fn run_episode(scenario_json: &str, policy: &str, seed: u64, noise_sigma: f64, max_steps: Option<usize>) -> PyResult<String> {
    let sc: Scenario = parse(scenario_json)?;
    sc.validate().map_err(to_py)?;
    let lp = bench::load_policy(policy, None).map_err(to_py)?;
    let opts = EpisodeOptions { seed, noise_sigma, max_steps, ..Default::default() };
    let r = sim::run_episode(&sc, lp.policy.as_ref(), &opts).map_err(to_py)?;
    json(&serde_json::json!({
        "scenario_id": r.scenario_id,
        "policy": r.policy,
        "converged": r.converged,
        "recovery_steps": r.recovery_steps,
        "recovery_time": r.recovery_time,
        "collisions_per_uav": r.collisions_per_uav,
        "final_components": r.final_components,
    }))
}

/// Component count and Fiedler value of the disk graph over `positions`.
#[pyfunction]
#[pyo3(signature = (positions, d_comm = 120.0))]
fn connectivity(positions: Vec<(f64, f64)>, d_comm: f64) -> PyResult<(usize, f64)> {
    if !(d_comm > 0.0) {
        return Err(PyValueError::new_err("d_comm must be positive"));
    }
    let n = positions.len();
    let state = SwarmState {
        positions: positions.into_iter().map(|(x, y)| Vec2::new(x, y)).collect(),
        velocities: vec![Vec2::ZERO; n],
        alive: vec![true; n],
        t: 0,
        dt: 0.1,
    };
    let rep = sim::connectivity(&sim::comm_graph(&state, d_comm).adjacency);
    Ok((rep.n_components, rep.fiedler))
}

/// Evaluates a campaign (JSON `CampaignSpec`) and returns the metrics table.
#[pyfunction]
fn evaluate_campaign(spec_json: &str) -> PyResult<String> {
    let spec: CampaignSpec = parse(spec_json)?;
    spec.validate().map_err(to_py)?;
    let policies = spec.policies.iter().map(|p| bench::load_policy(p, None)).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    json(&bench::evaluate_campaign(&spec, &policies).map_err(to_py)?)
}

/// Runs the property suites; a fresh default model stands in when no
/// checkpoint is given.
#[pyfunction]
#[pyo3(signature = (spec_json = "{}", checkpoint = None))]
fn run_props(spec_json: &str, checkpoint: Option<&str>) -> PyResult<String> {
    let spec: PropsSpec = parse(spec_json)?;
    let models = match checkpoint {
        Some(path) => Models::load(path).map_err(to_py)?.0,
        None => Models::new(&ModelConfig::default(), spec.seed).map_err(to_py)?,
    };
    json(&bench::run_props(&spec, &models.actor.encoder).map_err(to_py)?)
}

#[pymodule]
fn swarmheal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(connectivity, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(run_props, m)?)?;
    Ok(())
}
