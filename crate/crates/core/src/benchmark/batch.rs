use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{InfoRegime, ScenarioConfig};
use super::episode::{run_episode_recorded, EpisodeRecord, FailureReason};
use crate::hybrid_policy::LoopRule;

/// Aggregated metrics of one configuration cell. Serialized as one table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub width: u32,
    pub height: u32,
    pub density: f64,
    pub agents: usize,
    pub max_steps: u32,
    pub instances: usize,
    pub regime: InfoRegime,
    pub loop_detection: bool,
    pub loop_rule: LoopRule,
    pub switch_threshold: usize,
    pub latency: u32,
    pub drop_rate: f64,
    /// Fraction of episodes where every agent arrived.
    pub sr: f64,
    /// Mean makespan, failures counted at the step cap.
    pub el: f64,
    /// Mean fraction of agents that individually arrived.
    pub icr: f64,
    /// Mean agent-agent conflicts per episode.
    pub collisions: f64,
    pub obstacle_hits: f64,
    pub loop_events: f64,
    pub timeouts: usize,
    pub infeasible: usize,
}

impl AggregateReport {
    /// Folds records in the order given.
    pub fn from_records(config: &ScenarioConfig, records: &[EpisodeRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        AggregateReport {
            width: config.width,
            height: config.height,
            density: config.density,
            agents: config.agents,
            max_steps: config.max_steps(),
            instances: records.len(),
            regime: config.regime,
            loop_detection: config.loop_detection,
            loop_rule: config.loop_rule,
            switch_threshold: config.switch_threshold,
            latency: config.latency,
            drop_rate: config.drop_rate,
            sr: mean(&|r| r.success as u8 as f64),
            el: mean(&|r| r.makespan as f64),
            icr: mean(&|r| r.completion_rate()),
            collisions: mean(&|r| r.collisions as f64),
            obstacle_hits: mean(&|r| r.obstacle_hits as f64),
            loop_events: mean(&|r| r.loop_events.iter().sum::<u32>() as f64),
            timeouts: records
                .iter()
                .filter(|r| r.failure == Some(FailureReason::Timeout))
                .count(),
            infeasible: records
                .iter()
                .filter(|r| r.failure == Some(FailureReason::InfeasibleInstance))
                .count(),
        }
    }
}

/// Runs every instance seed of `config` on the current rayon pool. Records
/// come back in seed-list order.
pub fn run_batch_records(config: &ScenarioConfig) -> Vec<EpisodeRecord> {
    config
        .instance_seeds()
        .par_iter()
        .map(|&s| run_episode_recorded(config, s))
        .collect()
}

pub fn run_batch(config: &ScenarioConfig) -> AggregateReport {
    AggregateReport::from_records(config, &run_batch_records(config))
}

pub fn run_sweep(base: &ScenarioConfig, agent_counts: &[usize]) -> Vec<AggregateReport> {
    agent_counts
        .iter()
        .map(|&n| run_batch(&base.with_agents(n)))
        .collect()
}

/// Difference `metric(a) - metric(b)` between two cells at one agent count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub agents: usize,
    pub a: String,
    pub b: String,
    pub sr_delta: f64,
    pub el_delta: f64,
    pub icr_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSuite {
    pub reports: Vec<AggregateReport>,
    pub comparisons: Vec<Comparison>,
}

fn cell_label(r: &AggregateReport) -> String {
    format!(
        "{}/{}",
        r.regime,
        if r.loop_detection {
            "loop-on"
        } else {
            "loop-off"
        }
    )
}

fn compare(a: &AggregateReport, b: &AggregateReport) -> Comparison {
    Comparison {
        agents: a.agents,
        a: cell_label(a),
        b: cell_label(b),
        sr_delta: a.sr - b.sr,
        el_delta: a.el - b.el,
        icr_delta: a.icr - b.icr,
    }
}

/// Information regime x loop detection, for every agent count.
pub fn run_ablation_suite(base: &ScenarioConfig, agent_counts: &[usize]) -> AblationSuite {
    let mut reports = Vec::new();
    let mut comparisons = Vec::new();
    for &n in agent_counts {
        let cell = |regime, loop_detection| {
            let cfg = ScenarioConfig {
                regime,
                loop_detection,
                ..base.with_agents(n)
            };
            run_batch(&cfg)
        };
        let grid: Vec<AggregateReport> = [true, false]
            .into_iter()
            .flat_map(|l| InfoRegime::ALL.map(|r| (r, l)))
            .map(|(r, l)| cell(r, l))
            .collect();
        // grid: [full, shared, local] with loop on, then the same with loop off
        for l in [0, 3] {
            comparisons.push(compare(&grid[l], &grid[l + 1]));
            comparisons.push(compare(&grid[l + 1], &grid[l + 2]));
        }
        for r in 0..3 {
            comparisons.push(compare(&grid[r], &grid[r + 3]));
        }
        reports.extend(grid);
    }
    AblationSuite {
        reports,
        comparisons,
    }
}
