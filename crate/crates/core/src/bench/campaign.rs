use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::heuristic;
use crate::error::{Error, Result};
use crate::gnn::Models;
use crate::perception::PerceptionConfig;
use crate::sim::{generate_scenario_with, run_episode, ActMode, EpisodeOptions, Policy, Scenario, ScenarioParams, Tier};
use crate::training::derive_seed;

const TAG_CASE: u64 = 11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSpec {
    pub sizes: Vec<usize>,
    pub damage_ratios: Vec<f64>,
    pub cases: usize,
    /// Heuristic names or checkpoint paths.
    pub policies: Vec<String>,
    pub noise_sigmas: Vec<f64>,
    pub seed: u64,
    pub tier: Tier,
    /// Optional step cap below `t_max`; unconverged cases still count as `t_max`.
    pub max_steps: Option<usize>,
    pub k_act: usize,
    pub k_dmg: usize,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            sizes: vec![20, 50, 100],
            damage_ratios: vec![0.25, 0.5, 0.75],
            cases: 50,
            policies: vec!["center-fly".into(), "potential-field".into()],
            noise_sigmas: vec![0.0],
            seed: 0,
            tier: Tier::Any,
            max_steps: None,
            k_act: PerceptionConfig::DEFAULT_K_ACT,
            k_dmg: PerceptionConfig::DEFAULT_K_DMG,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cases == 0 {
            return Err(Error::config("cases per cell must be at least 1"));
        }
        if self.sizes.is_empty() || self.damage_ratios.is_empty() || self.policies.is_empty() || self.noise_sigmas.is_empty() {
            return Err(Error::config("sizes, damage_ratios, policies and noise_sigmas must be non-empty"));
        }
        if self.damage_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::config("damage ratios must lie in (0, 1)"));
        }
        if self.noise_sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("noise sigmas must be finite and non-negative"));
        }
        Ok(())
    }

    /// The deterministic scenario of one cell case.
    pub fn scenario(&self, size_idx: usize, ratio_idx: usize, case: usize) -> Result<Scenario> {
        let cell = (size_idx * self.damage_ratios.len() + ratio_idx) as u64;
        let mut p =
            ScenarioParams::new(self.sizes[size_idx], self.damage_ratios[ratio_idx], derive_seed(self.seed, TAG_CASE + cell, case as u64));
        p.tier = self.tier;
        generate_scenario_with(&p)
    }
}

/// A named policy ready for evaluation.
pub struct LoadedPolicy {
    pub name: String,
    pub policy: Box<dyn Policy>,
}

/// Resolves heuristic names, else loads the string as a checkpoint path
/// (relative paths against `base`).
pub fn load_policy(name: &str, base: Option<&Path>) -> Result<LoadedPolicy> {
    if let Some(p) = heuristic(name) {
        return Ok(LoadedPolicy { name: name.to_string(), policy: p });
    }
    let path = match base {
        Some(b) if Path::new(name).is_relative() => b.join(name),
        _ => Path::new(name).to_path_buf(),
    };
    let (models, _) = Models::load(&path)?;
    Ok(LoadedPolicy { name: name.to_string(), policy: Box::new(models.actor) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub policy: String,
    pub n: usize,
    pub damage_ratio: f64,
    pub sigma: f64,
    pub case: usize,
    pub scenario_id: String,
    pub converged: bool,
    /// `t_max` for unconverged or faulted cases.
    pub recovery_steps: usize,
    pub recovery_time: f64,
    /// `None` when the episode faulted.
    pub collisions_per_uav: Option<f64>,
    pub faulted: bool,
    /// Fractional rank among policies on this case (1 is best).
    pub rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: String,
    pub n: usize,
    pub damage_ratio: f64,
    pub sigma: f64,
    pub cases: usize,
    pub faults: usize,
    pub convergence_rate: f64,
    pub recovery_time_mean: f64,
    pub recovery_time_std: f64,
    pub recovery_time_ci95: f64,
    pub collisions_mean: f64,
    pub collisions_std: f64,
    pub collisions_ci95: f64,
    pub rank_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    /// Which grid the numbers aggregate over.
    pub scope: CampaignSpec,
    pub cells: Vec<CellSummary>,
    pub cases: Vec<CaseResult>,
}

/// Fractional ranks (ties share the mean position) of `keys`, lower is better.
pub fn fractional_ranks<K: PartialOrd>(keys: &[K]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && keys[order[j]].partial_cmp(&keys[order[i]]) == Some(std::cmp::Ordering::Equal) {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Mean, sample std, and half-width of the normal 95% interval.
pub fn mean_std_ci(xs: &[f64]) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (mean, std, 1.96 * std / n.sqrt())
}

fn run_case(sc: &Scenario, lp: &LoadedPolicy, spec: &CampaignSpec, sigma: f64, case: usize) -> CaseResult {
    let opts = EpisodeOptions {
        mode: ActMode::Deterministic,
        seed: sc.seed,
        noise_sigma: sigma,
        record_observations: false,
        max_steps: spec.max_steps,
        perception: Some(PerceptionConfig::for_scenario(sc).with_budgets(spec.k_act, spec.k_dmg)),
    };
    let base = CaseResult {
        policy: lp.name.clone(),
        n: sc.n_total,
        damage_ratio: 0.0,
        sigma,
        case,
        scenario_id: sc.id.clone(),
        converged: false,
        recovery_steps: sc.t_max,
        recovery_time: sc.t_max as f64 * sc.dt,
        collisions_per_uav: None,
        faulted: true,
        rank: 0.0,
    };
    match run_episode(sc, lp.policy.as_ref(), &opts) {
        Ok(r) => {
            let steps = if r.converged { r.recovery_steps } else { sc.t_max };
            CaseResult {
                converged: r.converged,
                recovery_steps: steps,
                recovery_time: steps as f64 * sc.dt,
                collisions_per_uav: Some(r.collisions_per_uav),
                faulted: false,
                ..base
            }
        }
        Err(_) => base,
    }
}

/// Runs every (size, ratio, sigma, case) for every policy in deterministic
/// mode. Faulting episodes are recorded as failed cases.
pub fn evaluate_campaign(spec: &CampaignSpec, policies: &[LoadedPolicy]) -> Result<MetricsTable> {
    spec.validate()?;
    if policies.len() != spec.policies.len() {
        return Err(Error::contract("loaded policies do not match the campaign policy list"));
    }
    let mut jobs = Vec::new();
    for si in 0..spec.sizes.len() {
        for ri in 0..spec.damage_ratios.len() {
            for &sigma in &spec.noise_sigmas {
                for case in 0..spec.cases {
                    jobs.push((si, ri, sigma, case));
                }
            }
        }
    }
    let per_case: Vec<Vec<CaseResult>> = jobs
        .par_iter()
        .map(|&(si, ri, sigma, case)| {
            let sc = spec.scenario(si, ri, case)?;
            let mut rows: Vec<CaseResult> = policies
                .iter()
                .map(|lp| CaseResult { damage_ratio: spec.damage_ratios[ri], ..run_case(&sc, lp, spec, sigma, case) })
                .collect();
            let keys: Vec<(bool, usize, f64)> =
                rows.iter().map(|r| (!r.converged, r.recovery_steps, r.collisions_per_uav.unwrap_or(f64::INFINITY))).collect();
            for (r, rank) in rows.iter_mut().zip(fractional_ranks(&keys)) {
                r.rank = rank;
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for si in 0..spec.sizes.len() {
        for ri in 0..spec.damage_ratios.len() {
            for &sigma in &spec.noise_sigmas {
                for (pi, lp) in policies.iter().enumerate() {
                    let rows: Vec<&CaseResult> = per_case
                        .iter()
                        .zip(&jobs)
                        .filter(|(_, j)| j.0 == si && j.1 == ri && j.2 == sigma)
                        .map(|(rows, _)| &rows[pi])
                        .collect();
                    let rt: Vec<f64> = rows.iter().map(|r| r.recovery_time).collect();
                    let col: Vec<f64> = rows.iter().filter_map(|r| r.collisions_per_uav).collect();
                    let (rt_mean, rt_std, rt_ci) = mean_std_ci(&rt);
                    let (c_mean, c_std, c_ci) = mean_std_ci(&col);
                    cells.push(CellSummary {
                        policy: lp.name.clone(),
                        n: spec.sizes[si],
                        damage_ratio: spec.damage_ratios[ri],
                        sigma,
                        cases: rows.len(),
                        faults: rows.iter().filter(|r| r.faulted).count(),
                        convergence_rate: rows.iter().filter(|r| r.converged).count() as f64 / rows.len() as f64,
                        recovery_time_mean: rt_mean,
                        recovery_time_std: rt_std,
                        recovery_time_ci95: rt_ci,
                        collisions_mean: c_mean,
                        collisions_std: c_std,
                        collisions_ci95: c_ci,
                        rank_mean: rows.iter().map(|r| r.rank).sum::<f64>() / rows.len() as f64,
                    });
                }
            }
        }
    }
    Ok(MetricsTable { scope: spec.clone(), cells, cases: per_case.into_iter().flatten().collect() })
}

/// Floats print with Rust's shortest round-trip formatting, so identical
/// tables give identical bytes.
impl MetricsTable {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("cases.csv"))?;
        for c in &self.cases {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<MetricsTable> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.as_ref().join("metrics.json"))?)?)
    }

    pub fn cell(&self, policy: &str, n: usize, damage_ratio: f64, sigma: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.policy == policy && c.n == n && c.damage_ratio == damage_ratio && c.sigma == sigma)
    }

    /// Per-policy averages over every cell: the overall summary row.
    pub fn overall(&self) -> Vec<CellSummary> {
        let mut names: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !names.contains(&c.policy.as_str()) {
                names.push(&c.policy);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let rows: Vec<&CaseResult> = self.cases.iter().filter(|r| r.policy == name).collect();
                let rt: Vec<f64> = rows.iter().map(|r| r.recovery_time).collect();
                let col: Vec<f64> = rows.iter().filter_map(|r| r.collisions_per_uav).collect();
                let (rt_mean, rt_std, rt_ci) = mean_std_ci(&rt);
                let (c_mean, c_std, c_ci) = mean_std_ci(&col);
                CellSummary {
                    policy: name.to_string(),
                    n: 0,
                    damage_ratio: 0.0,
                    sigma: 0.0,
                    cases: rows.len(),
                    faults: rows.iter().filter(|r| r.faulted).count(),
                    convergence_rate: rows.iter().filter(|r| r.converged).count() as f64 / rows.len().max(1) as f64,
                    recovery_time_mean: rt_mean,
                    recovery_time_std: rt_std,
                    recovery_time_ci95: rt_ci,
                    collisions_mean: c_mean,
                    collisions_std: c_std,
                    collisions_ci95: c_ci,
                    rank_mean: rows.iter().map(|r| r.rank).sum::<f64>() / rows.len().max(1) as f64,
                }
            })
            .collect()
    }
}

/// Convergence and recovery time per (policy, sigma), averaged over sizes and ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub policy: String,
    pub sigma: f64,
    pub convergence_rate: f64,
    pub recovery_time_mean: f64,
    pub collisions_mean: f64,
}

/// Evaluates the campaign under each of `spec.noise_sigmas` and condenses
/// it to a degradation table. Monotonicity in sigma is not asserted.
pub fn noise_sweep(spec: &CampaignSpec, policies: &[LoadedPolicy]) -> Result<(MetricsTable, Vec<NoiseRow>)> {
    let table = evaluate_campaign(spec, policies)?;
    let mut rows = Vec::new();
    for lp in policies {
        for &sigma in &spec.noise_sigmas {
            let cases: Vec<&CaseResult> = table.cases.iter().filter(|c| c.policy == lp.name && c.sigma == sigma).collect();
            let n = cases.len().max(1) as f64;
            let col: Vec<f64> = cases.iter().filter_map(|c| c.collisions_per_uav).collect();
            rows.push(NoiseRow {
                policy: lp.name.clone(),
                sigma,
                convergence_rate: cases.iter().filter(|c| c.converged).count() as f64 / n,
                recovery_time_mean: cases.iter().map(|c| c.recovery_time).sum::<f64>() / n,
                collisions_mean: mean_std_ci(&col).0,
            });
        }
    }
    Ok((table, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_ranks_share_ties() {
        assert_eq!(fractional_ranks(&[3, 1, 3, 2]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(fractional_ranks(&[0, 0, 0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn interval_of_constant_sample_is_zero() {
        assert_eq!(mean_std_ci(&[2.0, 2.0, 2.0]), (2.0, 0.0, 0.0));
    }
}
