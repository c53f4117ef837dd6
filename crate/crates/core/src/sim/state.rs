use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sim::Scenario;

/// Positions, velocities and alive mask of every UAV at one time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub alive: Vec<bool>,
    pub t: usize,
    pub dt: f64,
}

impl SwarmState {
    /// Post-damage state at `t0`: everyone at rest, damaged agents dead.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let n = scenario.n_total;
        let mut alive = vec![true; n];
        for &d in &scenario.damage_set {
            alive[d] = false;
        }
        SwarmState { positions: scenario.initial_positions.clone(), velocities: vec![Vec2::ZERO; n], alive, t: 0, dt: scenario.dt }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn alive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }

    /// Advances one step; see [`step`].
    pub fn step(&self, actions: &[Vec2], v_max: f64) -> Result<SwarmState> {
        step(self, actions, v_max)
    }
}

/// First-order kinematic update: every alive agent's command is norm-clamped
/// to `v_max`, then `p <- p + v dt`. Dead agents keep zero velocity and a
/// frozen position regardless of their action entry.
pub fn step(state: &SwarmState, actions: &[Vec2], v_max: f64) -> Result<SwarmState> {
    if actions.len() != state.len() {
        return Err(Error::DimensionMismatch { context: "step actions", expected: state.len(), got: actions.len() });
    }
    let mut next = state.clone();
    for i in 0..state.len() {
        if state.alive[i] {
            let v = actions[i].clamp_norm(v_max);
            next.velocities[i] = v;
            next.positions[i] = state.positions[i] + v * state.dt;
        } else {
            next.velocities[i] = Vec2::ZERO;
        }
    }
    next.t = state.t + 1;
    Ok(next)
}
