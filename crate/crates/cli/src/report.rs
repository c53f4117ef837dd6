//! Markdown summaries of run directories.

use std::fmt::Write as _;
use std::path::Path;

use swarmheal::bench::{LatencyRow, MetricsTable, NoiseRow, PropReport};
use swarmheal::training::EpochMetrics;

use crate::{CliError, Result};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn campaign_section(out: &mut String, table: &MetricsTable) {
    let scope = &table.scope;
    let _ = writeln!(
        out,
        "Scope: sizes {:?}, damage ratios {:?}, {} cases per cell, sigmas {:?}, tier {:?}\n",
        scope.sizes, scope.damage_ratios, scope.cases, scope.noise_sigmas, scope.tier
    );
    out.push_str("| policy | convergence | recovery time (s) | collisions/UAV | rank |\n|---|---|---|---|---|\n");
    for c in table.overall() {
        let _ = writeln!(
            out,
            "| {} | {:.3} | {:.2} ± {:.2} | {:.4} ± {:.4} | {:.3} |",
            c.policy, c.convergence_rate, c.recovery_time_mean, c.recovery_time_std, c.collisions_mean, c.collisions_std, c.rank_mean
        );
    }
    out.push_str("\nPer cell:\n\n| policy | N | rho | sigma | convergence | recovery time (s) | ci95 | rank | faults |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for c in &table.cells {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.3} | {:.2} | {:.2} | {:.3} | {} |",
            c.policy, c.n, c.damage_ratio, c.sigma, c.convergence_rate, c.recovery_time_mean, c.recovery_time_ci95, c.rank_mean, c.faults
        );
    }
}

fn training_section(out: &mut String, metrics: &[EpochMetrics]) {
    let Some(last) = metrics.last() else { return };
    let best = metrics.iter().max_by(|a, b| a.val_return.total_cmp(&b.val_return)).unwrap_or(last);
    let k = metrics.len().min(10);
    let mean = |xs: &[EpochMetrics]| xs.iter().map(|m| m.val_return).sum::<f64>() / xs.len() as f64;
    let _ = writeln!(
        out,
        "Training: {} epochs; validation return first {k} {:.3}, last {k} {:.3}; best epoch {} ({:.3}, success {:.3})",
        metrics.len(),
        mean(&metrics[..k]),
        mean(&metrics[metrics.len() - k..]),
        best.epoch,
        best.val_return,
        best.val_success
    );
}

/// Prints a markdown report for each input directory and optionally writes
/// it to `<out>/report.md`.
pub fn report(inputs: &[std::path::PathBuf], out: Option<&Path>) -> Result<()> {
    let mut md = String::from("# swarmheal report\n");
    for dir in inputs {
        let _ = writeln!(md, "\n## {}\n", dir.display());
        let mut found = false;
        if let Some(table) = read_json::<MetricsTable>(&dir.join("metrics.json"))? {
            campaign_section(&mut md, &table);
            found = true;
        }
        if let Some(rows) = read_json::<Vec<NoiseRow>>(&dir.join("noise.json"))? {
            md.push_str("\nNoise sweep:\n\n| policy | sigma | convergence | recovery time (s) |\n|---|---|---|---|\n");
            for r in rows {
                let _ = writeln!(md, "| {} | {} | {:.3} | {:.2} |", r.policy, r.sigma, r.convergence_rate, r.recovery_time_mean);
            }
            found = true;
        }
        if let Some(reports) = read_json::<Vec<PropReport>>(&dir.join("props.json"))? {
            md.push_str("| suite | samples | violations | worst ratio | verdict |\n|---|---|---|---|---|\n");
            for r in reports {
                let verdict = if r.passed() { "pass" } else { "FAIL" };
                let _ = writeln!(md, "| {} | {} | {} | {:.4} | {verdict} |", r.name, r.samples, r.violations, r.worst_ratio);
            }
            found = true;
        }
        if let Some(rows) = read_json::<Vec<LatencyRow>>(&dir.join("scalebench.json"))? {
            md.push_str("| N | us per agent | max nodes | ratio to N=20 |\n|---|---|---|---|\n");
            for r in rows {
                let ratio = r.ratio_to_20.map_or("-".to_string(), |x| format!("{x:.3}"));
                let _ = writeln!(md, "| {} | {:.1} | {} | {ratio} |", r.n, r.median_secs * 1e6, r.max_nodes);
            }
            found = true;
        }
        let jsonl = dir.join("metrics.jsonl");
        if jsonl.exists() {
            let text = std::fs::read_to_string(&jsonl)?;
            let metrics = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str::<EpochMetrics>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("{}: {e}", jsonl.display())))?;
            training_section(&mut md, &metrics);
            found = true;
        }
        if !found {
            return Err(CliError::Config(format!("{} holds no recognizable run outputs", dir.display())));
        }
    }
    print!("{md}");
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.md"), &md)?;
    }
    Ok(())
}
