//! Trajectory export: one CSV row per (step, agent) plus a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sim::{EpisodeResult, SwarmState};

pub const CSV_HEADER: [&str; 7] = ["t", "agent_id", "alive", "x", "y", "vx", "vy"];

/// Episode metadata stored next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scenario_id: String,
    pub policy: String,
    pub converged: bool,
    pub recovery_steps: usize,
    pub recovery_time: f64,
    pub collisions_per_uav: f64,
    pub n_agents: usize,
    pub n_frames: usize,
    pub dt: f64,
}

/// 17 significant digits: enough to round-trip any f64.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_frames_csv(path: impl AsRef<Path>, frames: &[SwarmState]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for f in frames {
        for i in 0..f.len() {
            let (p, v) = (f.positions[i], f.velocities[i]);
            w.write_record([f.t.to_string(), i.to_string(), u8::from(f.alive[i]).to_string(), fmt(p.x), fmt(p.y), fmt(v.x), fmt(v.y)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str, row: usize) -> Result<T> {
    field.and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::contract(format!("trajectory csv row {row}: bad or missing {what}")))
}

/// Reads frames written by [`write_frames_csv`]. Rows must be grouped by `t`
/// with agent ids `0..n` in order.
pub fn read_frames_csv(path: impl AsRef<Path>, dt: f64) -> Result<Vec<SwarmState>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::contract(format!("unexpected trajectory header {header:?}")));
    }
    let mut frames: Vec<SwarmState> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = parse(rec.get(0), "t", row)?;
        let id: usize = parse(rec.get(1), "agent_id", row)?;
        let alive: u8 = parse(rec.get(2), "alive", row)?;
        let p = Vec2::new(parse(rec.get(3), "x", row)?, parse(rec.get(4), "y", row)?);
        let v = Vec2::new(parse(rec.get(5), "vx", row)?, parse(rec.get(6), "vy", row)?);
        if frames.last().is_none_or(|f| f.t != t) {
            frames.push(SwarmState { positions: vec![], velocities: vec![], alive: vec![], t, dt });
        }
        let f = frames.last_mut().expect("frame pushed above");
        if id != f.len() {
            return Err(Error::contract(format!("trajectory csv row {row}: agent {id} out of order")));
        }
        f.positions.push(p);
        f.velocities.push(v);
        f.alive.push(alive != 0);
    }
    Ok(frames)
}

/// Writes the episode's frames to `csv` and its metadata to the sidecar.
pub fn export_episode(result: &EpisodeResult, dt: f64, csv: impl AsRef<Path>) -> Result<()> {
    let csv = csv.as_ref();
    let frames = &result.trajectory.frames;
    write_frames_csv(csv, frames)?;
    let meta = TrajectoryMeta {
        scenario_id: result.scenario_id.clone(),
        policy: result.policy.clone(),
        converged: result.converged,
        recovery_steps: result.recovery_steps,
        recovery_time: result.recovery_time,
        collisions_per_uav: result.collisions_per_uav,
        n_agents: frames.first().map_or(0, SwarmState::len),
        n_frames: frames.len(),
        dt,
    };
    std::fs::write(sidecar_path(csv), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn import_episode(csv: impl AsRef<Path>) -> Result<(TrajectoryMeta, Vec<SwarmState>)> {
    let csv = csv.as_ref();
    let meta: TrajectoryMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv))?)?;
    let frames = read_frames_csv(csv, meta.dt)?;
    if frames.len() != meta.n_frames {
        return Err(Error::contract(format!("sidecar lists {} frames, csv has {}", meta.n_frames, frames.len())));
    }
    Ok((meta, frames))
}
