use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{InfoRegime, ScenarioConfig};
use crate::dstar_lite::Planner;
use crate::error::{Error, Result};
use crate::grid::{generate_instance, generate_map, Action, Coord, GridMap, Task};
use crate::gridworld::{
    apply_joint_action, executed_conflicts, observe_with, AgentState, Occupancy, StepOutcome,
};
use crate::hybrid_policy::{decide, DecisionTrace, HybridConfig, LocalPolicy, SafeGreedyPolicy};
use crate::rng;
use crate::shared_map::{extract_delta, BeliefMap, CommChannel, GridMemory, Knowledge, MapDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    Timeout,
    InfeasibleInstance,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::Timeout => "timeout",
            FailureReason::InfeasibleInstance => "infeasible-instance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub success: bool,
    /// Step of the last arrival, or the step cap on failure.
    pub makespan: u32,
    pub arrival_times: Vec<Option<u32>>,
    /// Agent-agent conflicts detected on intents.
    pub collisions: u64,
    /// Moves cancelled by walls or the map border.
    pub obstacle_hits: u64,
    pub mode_switches: Vec<u32>,
    pub loop_events: Vec<u32>,
    /// Steps where an agent returned to the cell it held two steps earlier.
    pub oscillations: Vec<u32>,
    /// Vertex or swap violations found by auditing executed positions.
    pub executed_conflicts: u64,
    pub failure: Option<FailureReason>,
    pub planner_expansions: u64,
}

impl EpisodeRecord {
    fn infeasible(seed: u64, agents: usize, max_steps: u32) -> Self {
        EpisodeRecord {
            seed,
            success: false,
            makespan: max_steps,
            arrival_times: vec![None; agents],
            collisions: 0,
            obstacle_hits: 0,
            mode_switches: vec![0; agents],
            loop_events: vec![0; agents],
            oscillations: vec![0; agents],
            executed_conflicts: 0,
            failure: Some(FailureReason::InfeasibleInstance),
            planner_expansions: 0,
        }
    }

    pub fn arrived(&self) -> usize {
        self.arrival_times.iter().flatten().count()
    }

    /// Fraction of agents that reached their own goal.
    pub fn completion_rate(&self) -> f64 {
        if self.arrival_times.is_empty() {
            return if self.success { 1.0 } else { 0.0 };
        }
        self.arrived() as f64 / self.arrival_times.len() as f64
    }
}

/// Seeds for the independent random streams of one episode.
fn episode_seeds(seed: u64) -> (u64, u64, u64) {
    (
        rng::derive(seed, 1),
        rng::derive(seed, 2),
        rng::derive(seed, 3),
    )
}

/// The map and instance that episode `seed` of `config` runs on.
pub fn generate_episode(config: &ScenarioConfig, seed: u64) -> Result<(GridMap, Vec<Task>)> {
    let (map_seed, instance_seed, _) = episode_seeds(seed);
    let map = generate_map(config.width, config.height, config.density, map_seed);
    let tasks = generate_instance(&map, config.agents, instance_seed)?;
    Ok((map, tasks))
}

/// Generates the map and instance for `seed` and simulates them.
pub fn run_episode(config: &ScenarioConfig, seed: u64) -> Result<EpisodeRecord> {
    let (map, tasks) = generate_episode(config, seed)?;
    run_episode_on(config, &map, &tasks, seed)
}

/// Simulates a given map and instance.
pub fn run_episode_on(
    config: &ScenarioConfig,
    map: &GridMap,
    tasks: &[Task],
    seed: u64,
) -> Result<EpisodeRecord> {
    let mut sim = Simulation::new(config, map, tasks, seed)?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}

/// Episode runner that never fails: generation errors become failed records.
pub(crate) fn run_episode_recorded(config: &ScenarioConfig, seed: u64) -> EpisodeRecord {
    match run_episode(config, seed) {
        Ok(r) => r,
        Err(Error::InstanceInfeasible { .. }) => {
            EpisodeRecord::infeasible(seed, config.agents, config.max_steps())
        }
        Err(e) => panic!("episode {seed} failed: {e}"),
    }
}

/// Step-by-step episode state. One synchronous step is: observe, fuse own
/// observations, broadcast and deliver deltas, repair plans, decide, move.
pub struct Simulation<'a> {
    map: &'a GridMap,
    max_steps: u32,
    regime: InfoRegime,
    broadcast_period: u32,
    radius: u32,
    hybrid: HybridConfig,
    policy: Box<dyn LocalPolicy + 'a>,
    policy_seed: u64,
    seed: u64,
    step: u32,
    agents: Vec<AgentState>,
    beliefs: Vec<BeliefMap>,
    memories: Vec<GridMemory>,
    planners: Vec<Planner>,
    outboxes: Vec<Vec<(Coord, Knowledge)>>,
    channel: CommChannel,
    keep_trace: bool,
    trace: Vec<DecisionTrace>,
    collisions: u64,
    obstacle_hits: u64,
    mode_switches: Vec<u32>,
    loop_events: Vec<u32>,
    oscillations: Vec<u32>,
    executed_conflicts: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        config: &ScenarioConfig,
        map: &'a GridMap,
        tasks: &[Task],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        for t in tasks {
            for c in [t.start, t.goal] {
                if !map.in_bounds(c) {
                    return Err(Error::OutOfBounds(c));
                }
            }
        }
        let (_, _, policy_seed) = episode_seeds(seed);
        let n = tasks.len();
        let mut agents: Vec<AgentState> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| AgentState::new(i, t.start, t.goal))
            .collect();
        for a in agents.iter_mut().filter(|a| a.start == a.goal) {
            a.arrive(0);
        }
        let beliefs: Vec<BeliefMap> = (0..n)
            .map(|_| match config.regime {
                InfoRegime::Full => BeliefMap::from_truth(map),
                _ => BeliefMap::unknown(map.width(), map.height()),
            })
            .collect();
        let planners = tasks
            .iter()
            .zip(&beliefs)
            .map(|(t, b)| Planner::new(b, t.start, t.goal))
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            map,
            max_steps: config.max_steps(),
            regime: config.regime,
            broadcast_period: config.broadcast_period,
            radius: config.radius,
            hybrid: config.hybrid(),
            policy: Box::new(SafeGreedyPolicy {
                epsilon: config.epsilon,
            }),
            policy_seed,
            seed,
            step: 0,
            agents,
            beliefs,
            memories: vec![GridMemory::new(); n],
            planners,
            outboxes: vec![Vec::new(); n],
            channel: CommChannel::new(n, config.latency, config.drop_rate, rng::derive(seed, 4)),
            keep_trace: false,
            trace: Vec::new(),
            collisions: 0,
            obstacle_hits: 0,
            mode_switches: vec![0; n],
            loop_events: vec![0; n],
            oscillations: vec![0; n],
            executed_conflicts: 0,
        })
    }

    /// Replaces the local policy.
    pub fn with_policy(mut self, policy: impl LocalPolicy + 'a) -> Self {
        self.policy = Box::new(policy);
        self
    }

    /// Keeps every [`DecisionTrace`] in memory.
    pub fn with_trace(mut self) -> Self {
        self.keep_trace = true;
        self
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn beliefs(&self) -> &[BeliefMap] {
        &self.beliefs
    }

    pub fn memories(&self) -> &[GridMemory] {
        &self.memories
    }

    pub fn trace(&self) -> &[DecisionTrace] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.max_steps || self.agents.iter().all(|a| !a.active)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self) -> Result<StepOutcome> {
        self.step += 1;
        let t = self.step;
        let n = self.agents.len();
        let occupancy = Occupancy::build(self.map, &self.agents);
        let mut changed: Vec<Vec<Coord>> = vec![Vec::new(); n];

        let mut observations = Vec::with_capacity(n);
        for i in 0..n {
            if !self.agents[i].active {
                observations.push(None);
                continue;
            }
            let obs = observe_with(self.map, &occupancy, &self.agents, i, self.radius)?;
            let delta = extract_delta(&obs, &self.beliefs[i], i, t);
            changed[i] = self.beliefs[i].fuse(&delta)?;
            self.memories[i].update(&obs);
            if self.regime == InfoRegime::Shared {
                self.outboxes[i].extend_from_slice(delta.entries());
                if (t - 1).is_multiple_of(self.broadcast_period) {
                    let out = std::mem::take(&mut self.outboxes[i]);
                    self.channel.broadcast(MapDelta::new(i, t, out), t);
                }
            }
            observations.push(Some(obs));
        }

        for (delta, recipients) in self.channel.deliver(t) {
            for r in recipients {
                if self.agents[r].active {
                    let c = self.beliefs[r].fuse(&delta)?;
                    changed[r].extend(c);
                }
            }
        }

        let mut actions = vec![Action::Wait; n];
        for i in 0..n {
            let Some(obs) = &observations[i] else {
                continue;
            };
            let agent = &self.agents[i];
            self.planners[i].apply_belief_delta(&self.beliefs[i], &changed[i], agent.pos);
            let call_seed = rng::derive(self.policy_seed, ((t as u64) << 24) | i as u64);
            let (action, record) = decide(
                agent,
                obs,
                &self.beliefs[i],
                &self.memories[i],
                &mut self.planners[i],
                self.policy.as_ref(),
                &self.hybrid,
                t,
                call_seed,
            )?;
            if t > 1 && record.mode != self.agents[i].mode {
                self.mode_switches[i] += 1;
            }
            self.agents[i].mode = record.mode;
            self.loop_events[i] += record.loop_detected as u32;
            actions[i] = action;
            if self.keep_trace {
                self.trace.push(record);
            }
        }

        let before: Vec<Coord> = self.agents.iter().map(|a| a.pos).collect();
        let active: Vec<bool> = self.agents.iter().map(|a| a.active).collect();
        let outcome = apply_joint_action(self.map, &mut self.agents, &actions, t)?;
        self.executed_conflicts +=
            executed_conflicts(&before, &outcome.new_positions, &active) as u64;
        self.collisions += outcome.collisions.len() as u64;
        self.obstacle_hits += outcome.obstacle_hits.len() as u64;
        for (i, a) in self.agents.iter().enumerate() {
            let h = &a.history;
            if active[i] && h.len() >= 3 && h[h.len() - 1] == h[h.len() - 3] {
                self.oscillations[i] += 1;
            }
        }
        Ok(outcome)
    }

    pub fn finish(self) -> EpisodeRecord {
        let arrival_times: Vec<Option<u32>> = self.agents.iter().map(|a| a.arrival_time).collect();
        let success = arrival_times.iter().all(Option::is_some);
        let makespan = if success {
            arrival_times.iter().flatten().copied().max().unwrap_or(0)
        } else {
            self.max_steps
        };
        EpisodeRecord {
            seed: self.seed,
            success,
            makespan,
            arrival_times,
            collisions: self.collisions,
            obstacle_hits: self.obstacle_hits,
            mode_switches: self.mode_switches,
            loop_events: self.loop_events,
            oscillations: self.oscillations,
            executed_conflicts: self.executed_conflicts,
            failure: (!success).then_some(FailureReason::Timeout),
            planner_expansions: self.planners.iter().map(Planner::expansions).sum(),
        }
    }
}
