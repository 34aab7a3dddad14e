//! Partially observable multi-agent pathfinding on 4-connected grids.
//!
//! Agents see only a square window around themselves. Each one keeps a
//! tri-state belief of the world, shares newly observed cells with its
//! teammates as small deltas, and plans over that belief with an incremental
//! D* Lite planner. A per-agent switching rule hands control to a local
//! reactive policy when the neighborhood gets crowded or when the planner's
//! trajectory starts to oscillate.
//!
//! The [`benchmark`] module drives whole episodes and batches of episodes and
//! produces the success-rate / episode-length tables.

pub mod benchmark;
pub mod dstar_lite;
pub mod error;
pub mod grid;
pub mod gridworld;
pub mod hybrid_policy;
mod rng;
pub mod shared_map;

pub use benchmark::{
    run_ablation_suite, run_batch, run_episode, run_episode_on, AblationSuite, AggregateReport,
    EpisodeRecord, FailureReason, InfoRegime, ScenarioConfig,
};
pub use dstar_lite::{PathCost, PlanResult, Planner};
pub use error::{Error, Result};
pub use grid::{generate_instance, generate_map, Action, Cell, Coord, GridMap, Task};
pub use gridworld::{
    apply_joint_action, compute_reward, observe, AgentState, Observation, StepOutcome,
};
pub use hybrid_policy::{
    count_neighbors, decide, detect_loop, select_mode, DecisionTrace, HybridConfig, LocalPolicy,
    LoopRule, Mode, SafeGreedyPolicy,
};
pub use shared_map::{BeliefMap, CommChannel, GridMemory, Knowledge, MapDelta};
