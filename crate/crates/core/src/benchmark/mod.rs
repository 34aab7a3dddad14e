//! Experiment harness: scenario configs, episode simulation, batch
//! aggregation, ablations and result emission.

mod batch;
mod config;
mod episode;
mod report;

pub use batch::{
    run_ablation_suite, run_batch, run_batch_records, run_sweep, AblationSuite, AggregateReport,
    Comparison,
};
pub use config::{default_max_steps, InfoRegime, ScenarioConfig, PRESETS};
pub use episode::{
    generate_episode, run_episode, run_episode_on, EpisodeRecord, FailureReason, Simulation,
};
pub use report::{emit_results, read_table, OutputFormat};
