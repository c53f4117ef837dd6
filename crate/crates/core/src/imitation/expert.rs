use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::imitation::D4;
use crate::perception::{LocalGraph, ObservedWorld, Perceiver, PerceptionConfig};
use crate::sim::trajectory_io::{read_frames_csv, write_frames_csv};
use crate::sim::{run_episode, ActMode, EpisodeOptions, Policy, Scenario, SwarmState};

pub const EXPERT_DB_SCHEMA: &str = "swarmheal.expert-db/v1";

/// One observation/action pair of a demonstration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertPair {
    pub t: usize,
    pub agent: usize,
    pub graph: LocalGraph,
    /// Applied velocity, m/s.
    pub action: Vec2,
}

/// The fastest successful demonstration found for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertRecord {
    pub scenario_id: String,
    pub generator: String,
    /// Steps until the survivors reconnected.
    pub t_e: usize,
    pub center: Vec2,
    /// Symmetry applied to the original demonstration.
    pub transform: D4,
    pub frames: Vec<SwarmState>,
    pub pairs: Vec<ExpertPair>,
}

/// Observation/action pairs implied by a frame sequence: the observation at
/// frame `t` and the velocity applied on the way to frame `t + 1`.
pub fn pairs_from_frames(frames: &[SwarmState], center: Vec2, perception: &PerceptionConfig) -> Vec<ExpertPair> {
    let mut out = Vec::new();
    for w in frames.windows(2) {
        let world = ObservedWorld::exact(&w[0], center);
        for (agent, graph) in Perceiver::new(&world, perception).local_graphs() {
            out.push(ExpertPair { t: w[0].t, agent, graph, action: w[1].velocities[agent] });
        }
    }
    out
}

/// Applies all eight symmetries about the record's center. Element 0 is the
/// identity and reproduces the input exactly.
pub fn d4_augment(record: &ExpertRecord) -> Vec<ExpertRecord> {
    D4::all()
        .into_iter()
        .map(|g| {
            let c = record.center;
            let frames = record
                .frames
                .iter()
                .map(|f| {
                    let mut f = f.clone();
                    f.positions.iter_mut().for_each(|p| *p = g.apply_about(*p, c));
                    f.velocities.iter_mut().for_each(|v| *v = g.apply(*v));
                    f
                })
                .collect();
            let pairs = record
                .pairs
                .iter()
                .map(|p| ExpertPair { t: p.t, agent: p.agent, graph: g.apply_graph(&p.graph), action: g.apply(p.action) })
                .collect();
            ExpertRecord { transform: g.compose(record.transform), frames, pairs, ..record.clone() }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpertDb {
    pub generators: Vec<String>,
    pub records: Vec<ExpertRecord>,
    /// Scenarios no generator solved.
    pub uncovered: Vec<String>,
    pub perception: Option<PerceptionConfig>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    scenario_id: String,
    generator: String,
    t_e: usize,
    center: Vec2,
    dt: f64,
    file: String,
    augmentation: D4,
}

#[derive(Serialize, Deserialize)]
struct Index {
    schema: String,
    generators: Vec<String>,
    perception: PerceptionConfig,
    records: Vec<IndexEntry>,
    uncovered: Vec<String>,
}

/// Runs every generator on every scenario and keeps, per scenario, the
/// converged trajectory with the fewest steps (ties: earlier generator).
pub fn build_expert_db(scenarios: &[Scenario], generators: &[&dyn Policy], perception: Option<&PerceptionConfig>) -> Result<ExpertDb> {
    if generators.is_empty() {
        return Err(Error::config("at least one expert generator is required"));
    }
    let mut db = ExpertDb { generators: generators.iter().map(|g| g.name()).collect(), ..Default::default() };
    for sc in scenarios {
        let pcfg = perception.cloned().unwrap_or_else(|| PerceptionConfig::for_scenario(sc));
        let opts = EpisodeOptions { mode: ActMode::Deterministic, seed: sc.seed, perception: Some(pcfg.clone()), ..Default::default() };
        let mut best: Option<(usize, String, Vec<SwarmState>)> = None;
        for g in generators {
            // A faulting generator simply does not cover the scenario.
            let Ok(r) = run_episode(sc, *g, &opts) else { continue };
            if r.converged && best.as_ref().is_none_or(|b| r.recovery_steps < b.0) {
                best = Some((r.recovery_steps, g.name(), r.trajectory.frames));
            }
        }
        match best {
            Some((t_e, generator, frames)) => {
                let pairs = pairs_from_frames(&frames, sc.virtual_center, &pcfg);
                db.records.push(ExpertRecord {
                    scenario_id: sc.id.clone(),
                    generator,
                    t_e,
                    center: sc.virtual_center,
                    transform: D4::IDENTITY,
                    frames,
                    pairs,
                });
            }
            None => db.uncovered.push(sc.id.clone()),
        }
        db.perception.get_or_insert(pcfg);
    }
    if db.records.is_empty() {
        return Err(Error::EmptyExpertDb { uncovered: db.uncovered.len() });
    }
    Ok(db)
}

impl ExpertDb {
    pub fn record(&self, scenario_id: &str) -> Option<&ExpertRecord> {
        self.records.iter().find(|r| r.scenario_id == scenario_id)
    }

    pub fn t_e(&self, scenario_id: &str) -> Option<usize> {
        self.record(scenario_id).map(|r| r.t_e)
    }

    pub fn pair_count(&self) -> usize {
        self.records.iter().map(|r| r.pairs.len()).sum()
    }

    /// Every record in all eight symmetric variants.
    pub fn augmented(&self) -> ExpertDb {
        ExpertDb { records: self.records.iter().flat_map(d4_augment).collect(), ..self.clone() }
    }

    /// Writes one trajectory CSV per record plus `index.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let perception = self.perception.clone().ok_or_else(|| Error::contract("expert database has no perception config"))?;
        let mut records = Vec::new();
        for (k, r) in self.records.iter().enumerate() {
            let file = format!("{k:05}.csv");
            write_frames_csv(dir.join(&file), &r.frames)?;
            records.push(IndexEntry {
                scenario_id: r.scenario_id.clone(),
                generator: r.generator.clone(),
                t_e: r.t_e,
                center: r.center,
                dt: r.frames.first().map_or(0.1, |f| f.dt),
                file,
                augmentation: r.transform,
            });
        }
        let index = Index {
            schema: EXPERT_DB_SCHEMA.into(),
            generators: self.generators.clone(),
            perception,
            records,
            uncovered: self.uncovered.clone(),
        };
        std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    /// Reads a directory written by [`ExpertDb::save`]; pairs are rebuilt
    /// from the stored frames.
    pub fn load(dir: impl AsRef<Path>) -> Result<ExpertDb> {
        let dir = dir.as_ref();
        let index: Index = serde_json::from_str(&std::fs::read_to_string(dir.join("index.json"))?)?;
        if index.schema != EXPERT_DB_SCHEMA {
            return Err(Error::Incompatible { path: dir.join("index.json"), reason: format!("schema {}", index.schema) });
        }
        let mut records = Vec::with_capacity(index.records.len());
        for e in index.records {
            let frames = read_frames_csv(dir.join(&e.file), e.dt)?;
            let pairs = pairs_from_frames(&frames, e.center, &index.perception);
            records.push(ExpertRecord {
                scenario_id: e.scenario_id,
                generator: e.generator,
                t_e: e.t_e,
                center: e.center,
                transform: e.augmentation,
                frames,
                pairs,
            });
        }
        Ok(ExpertDb { generators: index.generators, records, uncovered: index.uncovered, perception: Some(index.perception) })
    }
}
