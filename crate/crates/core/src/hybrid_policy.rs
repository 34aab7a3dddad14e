//! Per-agent decision layer.
//!
//! Each step an agent counts the other agents in its observation window. Above
//! the switching threshold it hands the step to a local reactive policy;
//! otherwise it follows its D* Lite plan, unless the plan is empty or the
//! agent's recent trajectory repeats itself, in which case the local policy
//! takes that one step as a fallback.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dstar_lite::Planner;
use crate::error::Result;
use crate::grid::{Action, Coord};
use crate::gridworld::{AgentState, ObsCell, Observation};
use crate::rng;
use crate::shared_map::{BeliefMap, GridMemory, Knowledge};

pub const DEFAULT_SWITCH_THRESHOLD: usize = 4;
pub const DEFAULT_EPSILON: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    DStarLite,
    LocalRL,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::DStarLite => "dstar",
            Mode::LocalRL => "local",
        })
    }
}

/// Which position repeats count as a loop.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Deserialize, serde::Serialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum LoopRule {
    /// `x(t) == x(t-2)` only.
    Oscillation,
    /// `x(t) == x(t-1)` or `x(t) == x(t-2)`.
    #[default]
    StagnationOrOscillation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    pub switch_threshold: usize,
    pub loop_detection: bool,
    pub loop_rule: LoopRule,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            switch_threshold: DEFAULT_SWITCH_THRESHOLD,
            loop_detection: true,
            loop_rule: LoopRule::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionSource {
    Planner,
    LocalPolicy,
    Fallback,
}

impl fmt::Display for ActionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionSource::Planner => "planner",
            ActionSource::LocalPolicy => "local",
            ActionSource::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecisionTrace {
    pub step: u32,
    pub agent: usize,
    pub neighbors: usize,
    pub mode: Mode,
    pub loop_detected: bool,
    pub planner_empty: bool,
    pub action: Action,
    pub source: ActionSource,
}

impl fmt::Display for DecisionTrace {
    /// One `key=value` record per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} agent={} n={} mode={} loop={} plan_empty={} action={} source={}",
            self.step,
            self.agent,
            self.neighbors,
            self.mode,
            self.loop_detected as u8,
            self.planner_empty as u8,
            self.action,
            self.source
        )
    }
}

/// Everything a local policy may look at.
#[derive(Debug, Clone, Copy)]
pub struct LocalContext<'a> {
    pub obs: &'a Observation,
    pub memory: &'a GridMemory,
    pub belief: &'a BeliefMap,
    pub goal: Coord,
}

/// Reactive single-step policy used in crowded regions and as the loop
/// fallback. Implementations must be deterministic in `seed`.
pub trait LocalPolicy: Send + Sync {
    fn act(&self, ctx: &LocalContext<'_>, seed: u64) -> Action;
}

/// Greedy Manhattan descent restricted to safe moves, with epsilon-uniform
/// exploration among the same safe moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeGreedyPolicy {
    pub epsilon: f64,
}

impl Default for SafeGreedyPolicy {
    fn default() -> Self {
        SafeGreedyPolicy {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl LocalPolicy for SafeGreedyPolicy {
    fn act(&self, ctx: &LocalContext<'_>, seed: u64) -> Action {
        safe_greedy_act(ctx.obs, ctx.belief, ctx.goal, self.epsilon, seed)
    }
}

/// Moves that stay on the map, avoid known obstacles and avoid every
/// visible agent.
pub fn safe_moves(obs: &Observation, belief: &BeliefMap) -> Vec<(Action, Coord)> {
    Action::MOVES
        .into_iter()
        .filter_map(|a| {
            let (dr, dc) = a.delta();
            let c = obs.center.offset(dr, dc, belief.width(), belief.height())?;
            let visible_free = obs.cell(c) == Some(ObsCell::Free);
            (visible_free && belief.get(c) != Knowledge::Blocked && !obs.agent_at(c))
                .then_some((a, c))
        })
        .collect()
}

pub fn safe_greedy_act(
    obs: &Observation,
    belief: &BeliefMap,
    goal: Coord,
    epsilon: f64,
    seed: u64,
) -> Action {
    let moves = safe_moves(obs, belief);
    if moves.is_empty() {
        return Action::Wait;
    }
    let mut rng = rng::rng(seed);
    if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
        return moves.choose(&mut rng).unwrap().0;
    }
    moves
        .iter()
        .min_by_key(|(a, c)| (c.manhattan(goal), *a))
        .unwrap()
        .0
}

pub fn count_neighbors(obs: &Observation) -> usize {
    obs.agent_count()
}

pub fn select_mode(n: usize, threshold: usize) -> Mode {
    if n > threshold {
        Mode::LocalRL
    } else {
        Mode::DStarLite
    }
}

/// `history` ends with the current position.
pub fn detect_loop(history: &VecDeque<Coord>, rule: LoopRule) -> bool {
    let len = history.len();
    let Some(&now) = history.back() else {
        return false;
    };
    let oscillating = len >= 3 && history[len - 3] == now;
    let stagnating = len >= 2 && history[len - 2] == now;
    match rule {
        LoopRule::Oscillation => oscillating,
        LoopRule::StagnationOrOscillation => oscillating || stagnating,
    }
}

/// Per-step decision for one active agent.
///
/// In planner mode an empty plan triggers one from-scratch replan on the
/// same belief before falling back to the local policy.
#[allow(clippy::too_many_arguments)]
pub fn decide(
    agent: &AgentState,
    obs: &Observation,
    belief: &BeliefMap,
    memory: &GridMemory,
    planner: &mut Planner,
    policy: &dyn LocalPolicy,
    config: &HybridConfig,
    step: u32,
    seed: u64,
) -> Result<(Action, DecisionTrace)> {
    let neighbors = count_neighbors(obs);
    let mode = select_mode(neighbors, config.switch_threshold);
    let ctx = LocalContext {
        obs,
        memory,
        belief,
        goal: agent.goal,
    };

    let mut trace = DecisionTrace {
        step,
        agent: agent.id,
        neighbors,
        mode,
        loop_detected: false,
        planner_empty: false,
        action: Action::Wait,
        source: ActionSource::LocalPolicy,
    };

    if mode == Mode::LocalRL {
        trace.action = policy.act(&ctx, seed);
        return Ok((trace.action, trace));
    }

    planner.compute_shortest_path(belief, agent.pos);
    let mut planned = planner.get_first_action(belief, agent.pos)?;
    if planned.is_none() {
        *planner = Planner::new(belief, agent.pos, agent.goal)?;
        planner.compute_shortest_path(belief, agent.pos);
        planned = planner.get_first_action(belief, agent.pos)?;
    }
    trace.planner_empty = planned.is_none();
    trace.loop_detected = config.loop_detection
        && agent.pos != agent.goal
        && detect_loop(&agent.history, config.loop_rule);

    match planned {
        Some(a) if !trace.loop_detected => {
            trace.action = a;
            trace.source = ActionSource::Planner;
        }
        _ => {
            trace.action = policy.act(&ctx, seed);
            trace.source = ActionSource::Fallback;
        }
    }
    Ok((trace.action, trace))
}
