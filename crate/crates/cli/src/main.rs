//! `swarmheal` command-line front end.
//!
//! Every subcommand takes an optional JSON config (`--config`), writes into
//! a run directory (`--out`) and exits with 0 on success, 2 on a config or
//! checkpoint problem, 3 on a failed property suite and 4 on an episode
//! fault.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use swarmheal::bench::{
    evaluate_campaign, load_policy, noise_sweep, run_props, scalebench, CampaignSpec, LoadedPolicy, MetricsTable, PropsSpec, ScaleBenchSpec,
};
use swarmheal::gnn::{ModelConfig, Models};
use swarmheal::sim::{generate_scenario_with, ScenarioParams, Tier};
use swarmheal::training::{derive_seed, train, EpochMetrics, TrainConfig};

mod report;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Property(String),
    #[error("{0}")]
    EpisodeFault(String),
    #[error(transparent)]
    Core(swarmheal::Error),
}

impl From<swarmheal::Error> for CliError {
    fn from(e: swarmheal::Error) -> Self {
        use swarmheal::Error as E;
        match e {
            E::Config(_) | E::Incompatible { .. } | E::Json(_) | E::EmptyExpertDb { .. } => CliError::Config(e.to_string()),
            E::PolicyFault { .. } => CliError::EpisodeFault(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Property(_) => 3,
            CliError::EpisodeFault(_) => 4,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "swarmheal", version, about = "Connectivity recovery for damaged UAV swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for all outputs.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate post-damage scenario files.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to two subnets near the center.
        #[arg(long)]
        easy: bool,
    },
    /// Train a policy; checkpoints go under `<out>/checkpoints`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate policies over a campaign grid.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Run the structural property suites against a checkpoint's encoder.
    Props {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path, or `best` / `last` inside `--run`. A freshly
        /// initialized default model is used when absent.
        #[arg(long)]
        checkpoint: Option<String>,
        /// Training run directory used to resolve `best` / `last`.
        #[arg(long, default_value = ".")]
        run: PathBuf,
    },
    /// Evaluate a campaign under each localization noise level.
    Noise {
        #[command(flatten)]
        common: Common,
    },
    /// Per-agent latency of graph building plus one actor forward, by swarm size.
    Scalebench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: String,
        #[arg(long, default_value = ".")]
        run: PathBuf,
    },
    /// Summarize evaluation and training run directories as markdown.
    Report {
        /// Run directories to summarize.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write `report.md` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenSpec {
    n: usize,
    damage_ratio: f64,
    cases: usize,
    seed: u64,
    tier: Tier,
    map_width: Option<f64>,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { n: 20, damage_ratio: 0.5, cases: 50, seed: 0, tier: Tier::Any, map_width: None }
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Relative policy and checkpoint paths resolve against the config's directory.
fn config_base(common: &Common) -> Option<PathBuf> {
    common.config.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(swarmheal::Error::from)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Copies the effective config in and stamps the tool version.
fn stamp_run(out: &Path, subcommand: &str, config: &impl Serialize) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_json(&out.join(format!("{subcommand}_config.json")), config)?;
    let manifest = serde_json::json!({
        "tool": "swarmheal",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
    });
    write_json(&out.join("manifest.json"), &manifest)
}

fn resolve_checkpoint(name: &str, run: &Path) -> PathBuf {
    match name {
        "best" | "last" => run.join("checkpoints").join(format!("{name}.ckpt")),
        _ => PathBuf::from(name),
    }
}

/// Any failure to load a checkpoint, including a missing file, is a config error.
fn load_models(path: &Path) -> Result<Models> {
    Models::load(path).map(|(m, _)| m).map_err(|e| CliError::Config(format!("checkpoint {}: {e}", path.display())))
}

fn load_policies(spec: &CampaignSpec, base: Option<&Path>) -> Result<Vec<LoadedPolicy>> {
    spec.validate()?;
    spec.policies.iter().map(|p| load_policy(p, base).map_err(|e| CliError::Config(format!("policy {p}: {e}")))).collect()
}

fn fault_check(table: &MetricsTable) -> Result<()> {
    let faults = table.cases.iter().filter(|c| c.faulted).count();
    if faults > 0 {
        return Err(CliError::EpisodeFault(format!("{faults} of {} cases faulted; tables were still written", table.cases.len())));
    }
    Ok(())
}

fn print_overall(table: &MetricsTable) {
    for c in table.overall() {
        println!(
            "{:<24} conv {:.3}  recovery {:.2}s ±{:.2}  collisions {:.4}  rank {:.3}",
            c.policy, c.convergence_rate, c.recovery_time_mean, c.recovery_time_std, c.collisions_mean, c.rank_mean
        );
    }
}

fn cmd_gen(common: &Common, n: Option<usize>, rho: Option<f64>, cases: Option<usize>, seed: Option<u64>, easy: bool) -> Result<()> {
    let mut spec: GenSpec = load_config(common.config.as_deref())?;
    spec.n = n.unwrap_or(spec.n);
    spec.damage_ratio = rho.unwrap_or(spec.damage_ratio);
    spec.cases = cases.unwrap_or(spec.cases);
    spec.seed = seed.unwrap_or(spec.seed);
    if easy {
        spec.tier = Tier::Easy;
    }
    if spec.cases == 0 {
        return Err(CliError::Config("cases must be at least 1".into()));
    }
    stamp_run(&common.out, "gen", &spec)?;
    let dir = common.out.join("scenarios");
    std::fs::create_dir_all(&dir)?;
    for case in 0..spec.cases {
        let mut p = ScenarioParams::new(spec.n, spec.damage_ratio, derive_seed(spec.seed, 11, case as u64));
        p.tier = spec.tier;
        p.map_width = spec.map_width;
        let sc = generate_scenario_with(&p)?;
        sc.save(dir.join(format!("case_{case:04}.json")))?;
    }
    println!("wrote {} scenarios to {}", spec.cases, dir.display());
    Ok(())
}

fn cmd_train(common: &Common, epochs: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut cfg: TrainConfig = load_config(common.config.as_deref())?;
    cfg.n_epochs = epochs.unwrap_or(cfg.n_epochs);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    stamp_run(&common.out, "train", &cfg)?;
    let report = train(&cfg, Some(&common.out))?;
    let last: Option<&EpochMetrics> = report.metrics.last();
    if let Some(m) = last {
        println!("epochs {}  last val return {:.3}  success {:.3}", report.metrics.len(), m.val_return, m.val_success);
    }
    println!("best epoch {} (val return {:.3})", report.best_epoch, report.best_val_return);
    Ok(())
}

fn cmd_eval(common: &Common) -> Result<()> {
    let spec: CampaignSpec = load_config(common.config.as_deref())?;
    let policies = load_policies(&spec, config_base(common).as_deref())?;
    stamp_run(&common.out, "eval", &spec)?;
    let table = evaluate_campaign(&spec, &policies)?;
    table.write(&common.out)?;
    print_overall(&table);
    fault_check(&table)
}

fn cmd_noise(common: &Common) -> Result<()> {
    let spec: CampaignSpec = load_config(common.config.as_deref())?;
    let policies = load_policies(&spec, config_base(common).as_deref())?;
    stamp_run(&common.out, "noise", &spec)?;
    let (table, rows) = noise_sweep(&spec, &policies)?;
    table.write(&common.out)?;
    write_json(&common.out.join("noise.json"), &rows)?;
    for r in &rows {
        println!("{:<24} sigma {:>5.1}  conv {:.3}  recovery {:.2}s", r.policy, r.sigma, r.convergence_rate, r.recovery_time_mean);
    }
    fault_check(&table)
}

fn cmd_props(common: &Common, checkpoint: Option<&str>, run: &Path) -> Result<()> {
    let spec: PropsSpec = load_config(common.config.as_deref())?;
    spec.validate()?;
    let models = match checkpoint {
        Some(name) => load_models(&resolve_checkpoint(name, run))?,
        None => Models::new(&ModelConfig::default(), spec.seed)?,
    };
    stamp_run(&common.out, "props", &spec)?;
    let reports = run_props(&spec, &models.actor.encoder)?;
    write_json(&common.out.join("props.json"), &reports)?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {:<20} samples {:>7}  violations {}  worst ratio {:.4}", r.name, r.samples, r.violations, r.worst_ratio);
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!("failed suites: {}", failed.join(", "))))
    }
}

fn cmd_scalebench(common: &Common, checkpoint: &str, run: &Path) -> Result<()> {
    let spec: ScaleBenchSpec = load_config(common.config.as_deref())?;
    if spec.sizes.is_empty() || spec.repeats == 0 {
        return Err(CliError::Config("scalebench needs at least one size and one repeat".into()));
    }
    let models = load_models(&resolve_checkpoint(checkpoint, run))?;
    stamp_run(&common.out, "scalebench", &spec)?;
    let rows = scalebench(&models.actor, &spec)?;
    write_json(&common.out.join("scalebench.json"), &rows)?;
    for r in &rows {
        let ratio = r.ratio_to_20.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "N={:<5} {:>9.1}us per agent  nodes<={:<3} edges<={:<4} ratio {ratio}",
            r.n,
            r.median_secs * 1e6,
            r.max_nodes,
            r.max_edges
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, n, rho, cases, seed, easy } => cmd_gen(&common, n, rho, cases, seed, easy),
        Command::Train { common, epochs, seed } => cmd_train(&common, epochs, seed),
        Command::Eval { common } => cmd_eval(&common),
        Command::Props { common, checkpoint, run } => cmd_props(&common, checkpoint.as_deref(), &run),
        Command::Noise { common } => cmd_noise(&common),
        Command::Scalebench { common, checkpoint, run } => cmd_scalebench(&common, &checkpoint, &run),
        Command::Report { inputs, out } => report::report(&inputs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_distinct_exit_codes() {
        assert_eq!(CliError::from(swarmheal::Error::Config("x".into())).exit_code(), 2);
        let incompatible = swarmheal::Error::Incompatible { path: "m.ckpt".into(), reason: "shape".into() };
        assert_eq!(CliError::from(incompatible).exit_code(), 2);
        assert_eq!(CliError::Property("spectral-norm".into()).exit_code(), 3);
        assert_eq!(CliError::from(swarmheal::Error::PolicyFault { t: 3, agent: 1 }).exit_code(), 4);
        assert_eq!(CliError::from(std::io::Error::other("disk")).exit_code(), 1);
    }

    #[test]
    fn best_and_last_resolve_inside_the_run_directory() {
        assert_eq!(resolve_checkpoint("best", Path::new("r")), Path::new("r/checkpoints/best.ckpt"));
        assert_eq!(resolve_checkpoint("x/m.ckpt", Path::new("r")), Path::new("x/m.ckpt"));
    }
}
