//! Ground-truth environment: observation windows, synchronous joint moves with
//! vertex/edge conflict cancellation, and per-step rewards.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::grid::{Action, Cell, Coord, GridMap};
use crate::hybrid_policy::Mode;

/// Observation radius used by every experiment preset.
pub const OBSERVATION_RADIUS: u32 = 4;

/// Positions retained per agent. Loop detection needs three.
pub const HISTORY_LEN: usize = 8;

pub const STEP_PENALTY: f64 = -0.0001;
pub const COLLISION_PENALTY: f64 = -0.0002;
pub const GOAL_REWARD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub id: usize,
    pub pos: Coord,
    pub start: Coord,
    pub goal: Coord,
    pub active: bool,
    pub history: VecDeque<Coord>,
    pub mode: Mode,
    pub arrival_time: Option<u32>,
}

impl AgentState {
    pub fn new(id: usize, start: Coord, goal: Coord) -> Self {
        let mut history = VecDeque::with_capacity(HISTORY_LEN);
        history.push_back(start);
        AgentState {
            id,
            pos: start,
            start,
            goal,
            active: true,
            history,
            mode: Mode::DStarLite,
            arrival_time: None,
        }
    }

    pub(crate) fn record_position(&mut self, pos: Coord) {
        self.pos = pos;
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(pos);
    }

    /// Marks the agent as having left the map at `step`.
    pub(crate) fn arrive(&mut self, step: u32) {
        self.active = false;
        self.arrival_time = Some(step);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObsCell {
    Free,
    Blocked,
    OutOfBounds,
}

/// A `(2R+1) x (2R+1)` window centered on the observer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub center: Coord,
    pub radius: u32,
    pub obstacles: Vec<ObsCell>,
    pub agents: Vec<bool>,
    pub own_goal: Coord,
}

impl Observation {
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    fn slot(&self, dr: i64, dc: i64) -> Option<usize> {
        let r = self.radius as i64;
        if dr.abs() > r || dc.abs() > r {
            return None;
        }
        Some(((dr + r) * self.side() as i64 + (dc + r)) as usize)
    }

    fn relative(&self, c: Coord) -> (i64, i64) {
        (
            c.row as i64 - self.center.row as i64,
            c.col as i64 - self.center.col as i64,
        )
    }

    /// Window value at map coordinate `c`, or `None` outside the window.
    pub fn cell(&self, c: Coord) -> Option<ObsCell> {
        let (dr, dc) = self.relative(c);
        self.slot(dr, dc).map(|i| self.obstacles[i])
    }

    /// Whether another active agent is visible at map coordinate `c`.
    pub fn agent_at(&self, c: Coord) -> bool {
        let (dr, dc) = self.relative(c);
        self.slot(dr, dc).is_some_and(|i| self.agents[i])
    }

    pub fn agent_count(&self) -> usize {
        self.agents.iter().filter(|&&a| a).count()
    }

    /// In-bounds window cells with their map coordinates.
    pub fn visible_cells(&self) -> impl Iterator<Item = (Coord, Cell)> + '_ {
        let side = self.side();
        let r = self.radius as i64;
        self.obstacles.iter().enumerate().filter_map(move |(i, v)| {
            let cell = match v {
                ObsCell::Free => Cell::Free,
                ObsCell::Blocked => Cell::Blocked,
                ObsCell::OutOfBounds => return None,
            };
            let row = self.center.row as i64 + (i / side) as i64 - r;
            let col = self.center.col as i64 + (i % side) as i64 - r;
            Some((Coord::new(row as u32, col as u32), cell))
        })
    }
}

/// Map-sized index of which active agent stands where.
#[derive(Debug, Clone)]
pub struct Occupancy {
    width: u32,
    slots: Vec<Option<u32>>,
}

impl Occupancy {
    pub fn build(map: &GridMap, agents: &[AgentState]) -> Self {
        let mut slots = vec![None; map.len()];
        for a in agents.iter().filter(|a| a.active) {
            slots[map.index(a.pos)] = Some(a.id as u32);
        }
        Occupancy {
            width: map.width(),
            slots,
        }
    }

    pub fn at(&self, c: Coord) -> Option<usize> {
        self.slots[c.row as usize * self.width as usize + c.col as usize].map(|i| i as usize)
    }
}

/// Builds the observation of `observer`. Other agents' goals and plans are
/// never included.
pub fn observe(
    map: &GridMap,
    agents: &[AgentState],
    observer: usize,
    radius: u32,
) -> Result<Observation> {
    let occupancy = Occupancy::build(map, agents);
    observe_with(map, &occupancy, agents, observer, radius)
}

pub fn observe_with(
    map: &GridMap,
    occupancy: &Occupancy,
    agents: &[AgentState],
    observer: usize,
    radius: u32,
) -> Result<Observation> {
    let me = &agents[observer];
    if !me.active {
        return Err(Error::ObserverInactive(observer));
    }
    let side = 2 * radius as usize + 1;
    let mut obstacles = Vec::with_capacity(side * side);
    let mut seen = Vec::with_capacity(side * side);
    let r = radius as i64;
    for dr in -r..=r {
        for dc in -r..=r {
            match me.pos.offset(dr, dc, map.width(), map.height()) {
                None => {
                    obstacles.push(ObsCell::OutOfBounds);
                    seen.push(false);
                }
                Some(c) => {
                    obstacles.push(match map.get(c) {
                        Some(Cell::Free) => ObsCell::Free,
                        _ => ObsCell::Blocked,
                    });
                    seen.push(occupancy.at(c).is_some_and(|id| id != observer));
                }
            }
        }
    }
    Ok(Observation {
        center: me.pos,
        radius,
        obstacles,
        agents: seen,
        own_goal: me.goal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictKind {
    Vertex,
    Edge,
}

/// An agent-agent conflict detected on intents. `agents.0 < agents.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Collision {
    pub agents: (usize, usize),
    pub kind: ConflictKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_positions: Vec<Coord>,
    pub collisions: Vec<Collision>,
    /// Agents whose move was cancelled for running into a wall or the border.
    pub obstacle_hits: Vec<usize>,
    pub rewards: Vec<f64>,
    pub newly_arrived: Vec<usize>,
}

/// Table-driven reward; the terms stack additively.
pub fn compute_reward(moved: bool, collided: bool, reached_goal: bool) -> f64 {
    let _ = moved;
    let mut r = STEP_PENALTY;
    if collided {
        r += COLLISION_PENALTY;
    }
    if reached_goal {
        r += GOAL_REWARD;
    }
    r
}

/// Executes one synchronous step. Moves into walls, off the map, into a
/// vertex conflict or through a swap are cancelled; cancellation repeats until
/// no executed move conflicts with a stationary agent.
pub fn apply_joint_action(
    map: &GridMap,
    agents: &mut [AgentState],
    actions: &[Action],
    step: u32,
) -> Result<StepOutcome> {
    if actions.len() != agents.len() {
        return Err(Error::MalformedActionSet {
            expected: agents.len(),
            got: actions.len(),
        });
    }

    let n = agents.len();
    let mut target: Vec<Coord> = agents.iter().map(|a| a.pos).collect();
    let mut obstacle_hits = Vec::new();
    for (i, a) in agents.iter().enumerate() {
        if !a.active || actions[i] == Action::Wait {
            continue;
        }
        match a.pos.step(actions[i], map.width(), map.height()) {
            Some(c) if map.is_free(c) => target[i] = c,
            _ => obstacle_hits.push(i),
        }
    }

    let at: HashMap<Coord, usize> = agents
        .iter()
        .filter(|a| a.active)
        .map(|a| (a.pos, a.id))
        .collect();
    let mut conflicts: BTreeSet<Collision> = BTreeSet::new();
    let record = |set: &mut BTreeSet<Collision>, a: usize, b: usize, kind| {
        set.insert(Collision {
            agents: (a.min(b), a.max(b)),
            kind,
        });
    };

    loop {
        let mut changed = false;

        let mut claims: HashMap<Coord, Vec<usize>> = HashMap::new();
        for (i, a) in agents.iter().enumerate() {
            if a.active {
                claims.entry(target[i]).or_default().push(i);
            }
        }
        let mut contested: Vec<_> = claims.into_values().filter(|g| g.len() > 1).collect();
        contested.sort_unstable();
        for group in contested {
            for (k, &i) in group.iter().enumerate() {
                for &j in &group[k + 1..] {
                    record(&mut conflicts, i, j, ConflictKind::Vertex);
                }
                if target[i] != agents[i].pos {
                    target[i] = agents[i].pos;
                    changed = true;
                }
            }
        }

        for i in 0..n {
            if !agents[i].active || target[i] == agents[i].pos {
                continue;
            }
            if let Some(&j) = at.get(&target[i]) {
                if j != i && target[j] == agents[i].pos {
                    record(&mut conflicts, i, j, ConflictKind::Edge);
                    target[i] = agents[i].pos;
                    target[j] = agents[j].pos;
                    changed = true;
                }
            }
        }

        if !changed {
            break;
        }
    }

    let collided_agents: BTreeSet<usize> = conflicts
        .iter()
        .flat_map(|c| [c.agents.0, c.agents.1])
        .chain(obstacle_hits.iter().copied())
        .collect();

    let mut rewards = vec![0.0; n];
    let mut newly_arrived = Vec::new();
    for i in 0..n {
        if !agents[i].active {
            continue;
        }
        let moved = target[i] != agents[i].pos;
        agents[i].record_position(target[i]);
        let reached = target[i] == agents[i].goal;
        if reached {
            agents[i].arrive(step);
            newly_arrived.push(i);
        }
        rewards[i] = compute_reward(moved, collided_agents.contains(&i), reached);
    }

    Ok(StepOutcome {
        new_positions: target,
        collisions: conflicts.into_iter().collect(),
        obstacle_hits,
        rewards,
        newly_arrived,
    })
}

/// Counts vertex and swap violations between two consecutive position
/// snapshots of the agents that were active at the start of the step.
/// Independent of [`apply_joint_action`]; used to audit executed traces.
pub fn executed_conflicts(before: &[Coord], after: &[Coord], active: &[bool]) -> usize {
    let ids: Vec<usize> = (0..before.len()).filter(|&i| active[i]).collect();
    let mut violations = 0;
    for (k, &i) in ids.iter().enumerate() {
        for &j in &ids[k + 1..] {
            if after[i] == after[j] {
                violations += 1;
            }
            if before[i] != after[i] && before[i] == after[j] && before[j] == after[i] {
                violations += 1;
            }
        }
    }
    violations
}
