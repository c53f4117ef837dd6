//! Evaluation campaigns, noise sweeps, the per-agent latency benchmark and
//! the structural property suites.

mod campaign;
mod props;
mod scalebench;

pub use campaign::{
    evaluate_campaign, fractional_ranks, load_policy, mean_std_ci, noise_sweep, CampaignSpec, CaseResult, CellSummary, LoadedPolicy,
    MetricsTable, NoiseRow,
};
pub use props::{
    connectivity_oracle, message_bound_suite, random_bounded_graph, random_graph, run_props, spectral_norm_power, spectral_norm_suite,
    success_variance_suite, PropReport, PropsSpec,
};
pub use scalebench::{agent_latency, scalebench, LatencyRow, ScaleBenchSpec};
