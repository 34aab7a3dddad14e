//! Incremental D* Lite over a belief map.
//!
//! Searches backwards from the goal so that the agent's own movement only
//! shifts the heuristic (`km`) instead of invalidating the search tree. Edge
//! costs are unit between traversable 4-neighbors and infinite otherwise;
//! unknown cells count as traversable.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{Action, Coord};
use crate::shared_map::{BeliefMap, Knowledge};

const INF: u32 = u32::MAX;

/// Priority key `(min(g, rhs) + h + km, min(g, rhs))`, compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(pub u64, pub u64);

impl Key {
    const INFINITE: Key = Key(u64::MAX, u64::MAX);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathCost {
    Finite(u32),
    Infinite,
}

impl PathCost {
    fn from_raw(v: u32) -> Self {
        if v == INF {
            PathCost::Infinite
        } else {
            PathCost::Finite(v)
        }
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            PathCost::Finite(v) => Some(v),
            PathCost::Infinite => None,
        }
    }
}

impl fmt::Display for PathCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathCost::Finite(v) => write!(f, "{v}"),
            PathCost::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanResult {
    pub next_action: Option<Action>,
    pub path_cost: PathCost,
}

#[derive(Debug, Clone)]
pub struct Planner {
    width: u32,
    height: u32,
    goal: Coord,
    start: Coord,
    last_start: Coord,
    km: u64,
    g: Vec<u32>,
    rhs: Vec<u32>,
    blocked: Vec<bool>,
    queue: BinaryHeap<Reverse<(Key, u32)>>,
    queued: Vec<Option<Key>>,
    planned_version: Option<u64>,
    expansions: u64,
}

impl Planner {
    pub fn new(belief: &BeliefMap, start: Coord, goal: Coord) -> Result<Self> {
        if !belief.in_bounds(goal) {
            return Err(Error::OutOfBounds(goal));
        }
        if !belief.in_bounds(start) {
            return Err(Error::OutOfBounds(start));
        }
        if belief.get(goal) == Knowledge::Blocked {
            return Err(Error::GoalBlocked(goal));
        }
        let n = belief.len();
        let mut p = Planner {
            width: belief.width(),
            height: belief.height(),
            goal,
            start,
            last_start: start,
            km: 0,
            g: vec![INF; n],
            rhs: vec![INF; n],
            blocked: belief.cells().iter().map(|k| !k.traversable()).collect(),
            queue: BinaryHeap::new(),
            queued: vec![None; n],
            planned_version: None,
            expansions: 0,
        };
        let gi = p.idx(goal);
        p.rhs[gi] = 0;
        let key = p.key(gi);
        p.push(gi, key);
        Ok(p)
    }

    pub fn goal(&self) -> Coord {
        self.goal
    }

    pub fn km(&self) -> u64 {
        self.km
    }

    /// Total vertex expansions since construction.
    pub fn expansions(&self) -> u64 {
        self.expansions
    }

    pub fn g(&self, c: Coord) -> PathCost {
        PathCost::from_raw(self.g[self.idx(c)])
    }

    pub fn rhs(&self, c: Coord) -> PathCost {
        PathCost::from_raw(self.rhs[self.idx(c)])
    }

    fn idx(&self, c: Coord) -> usize {
        c.row as usize * self.width as usize + c.col as usize
    }

    fn coord(&self, i: usize) -> Coord {
        Coord::new(
            (i / self.width as usize) as u32,
            (i % self.width as usize) as u32,
        )
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coord(i);
        Action::MOVES
            .into_iter()
            .filter_map(move |a| c.step(a, self.width, self.height))
            .map(|n| self.idx(n))
    }

    fn neighbor_slots(&self, i: usize) -> [Option<usize>; 4] {
        let c = self.coord(i);
        Action::MOVES.map(|a| c.step(a, self.width, self.height).map(|n| self.idx(n)))
    }

    fn h(&self, i: usize) -> u64 {
        self.coord(i).manhattan(self.start) as u64
    }

    fn key(&self, i: usize) -> Key {
        let m = self.g[i].min(self.rhs[i]);
        if m == INF {
            Key::INFINITE
        } else {
            Key(m as u64 + self.h(i) + self.km, m as u64)
        }
    }

    fn push(&mut self, i: usize, key: Key) {
        self.queued[i] = Some(key);
        self.queue.push(Reverse((key, i as u32)));
    }

    /// Drops stale heap entries and returns the live minimum.
    fn top(&mut self) -> Option<(Key, usize)> {
        while let Some(&Reverse((k, i))) = self.queue.peek() {
            if self.queued[i as usize] == Some(k) {
                return Some((k, i as usize));
            }
            self.queue.pop();
        }
        None
    }

    fn best_successor(&self, i: usize) -> u32 {
        if self.blocked[i] {
            return INF;
        }
        self.neighbors(i)
            .filter(|&n| !self.blocked[n])
            .map(|n| self.g[n].saturating_add(1))
            .min()
            .unwrap_or(INF)
    }

    fn update_vertex(&mut self, i: usize) {
        if i != self.idx(self.goal) {
            self.rhs[i] = self.best_successor(i);
        }
        self.queued[i] = None;
        if self.g[i] != self.rhs[i] {
            let k = self.key(i);
            self.push(i, k);
        }
    }

    /// Runs the main loop until the cell at `start` is locally consistent.
    pub fn compute_shortest_path(&mut self, belief: &BeliefMap, start: Coord) -> PlanResult {
        self.start = start;
        let s = self.idx(start);
        while let Some((k_old, u)) = self.top() {
            if !(k_old < self.key(s) || self.rhs[s] != self.g[s]) {
                break;
            }
            self.expansions += 1;
            let k_new = self.key(u);
            if k_old < k_new {
                self.push(u, k_new);
            } else if self.g[u] > self.rhs[u] {
                self.g[u] = self.rhs[u];
                self.queued[u] = None;
                for n in self.neighbor_slots(u).into_iter().flatten() {
                    self.update_vertex(n);
                }
            } else {
                self.g[u] = INF;
                self.update_vertex(u);
                for n in self.neighbor_slots(u).into_iter().flatten() {
                    self.update_vertex(n);
                }
            }
        }
        self.planned_version = Some(belief.version());
        PlanResult {
            next_action: self.descend(start),
            path_cost: PathCost::from_raw(self.g[s]),
        }
    }

    /// Synchronizes edge costs with `belief` for the listed cells and
    /// re-queues the affected vertices. Returns how many cells changed
    /// traversability; when none did, the planner is left untouched.
    pub fn apply_belief_delta(
        &mut self,
        belief: &BeliefMap,
        changed: &[Coord],
        current_pos: Coord,
    ) -> usize {
        let flips: Vec<usize> = changed
            .iter()
            .map(|&c| self.idx(c))
            .filter(|&i| self.blocked[i] != !belief.cells()[i].traversable())
            .collect();
        if flips.is_empty() {
            return 0;
        }
        self.km += self.last_start.manhattan(current_pos) as u64;
        self.last_start = current_pos;
        self.start = current_pos;
        for &i in &flips {
            self.blocked[i] = !self.blocked[i];
        }
        for &i in &flips {
            self.update_vertex(i);
            for n in self.neighbor_slots(i).into_iter().flatten() {
                self.update_vertex(n);
            }
        }
        flips.len()
    }

    /// First move of a shortest path from `pos`: the neighbor minimizing
    /// `1 + g`, ties going to the earlier action. `Wait` at the goal, `None`
    /// when `pos` cannot reach it.
    pub fn get_first_action(&self, belief: &BeliefMap, pos: Coord) -> Result<Option<Action>> {
        if self.planned_version != Some(belief.version()) {
            return Err(Error::StalePlanner {
                planned: self.planned_version.unwrap_or(0),
                current: belief.version(),
            });
        }
        Ok(self.descend(pos))
    }

    fn descend(&self, pos: Coord) -> Option<Action> {
        if pos == self.goal {
            return Some(Action::Wait);
        }
        let i = self.idx(pos);
        if self.g[i] == INF || self.blocked[i] {
            return None;
        }
        let mut best: Option<(u32, Action)> = None;
        for a in Action::MOVES {
            let Some(n) = pos.step(a, self.width, self.height) else {
                continue;
            };
            let ni = self.idx(n);
            if self.blocked[ni] || self.g[ni] == INF {
                continue;
            }
            let cost = self.g[ni] + 1;
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, a));
            }
        }
        best.map(|(_, a)| a)
    }

    /// Cells holding a live queue entry, with their keys.
    pub fn queue_snapshot(&self) -> Vec<(Coord, Key)> {
        let mut out: Vec<_> = self
            .queued
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|k| (self.coord(i), k)))
            .collect();
        out.sort_by_key(|&(c, k)| (k, c));
        out
    }

    /// Cells outside the queue whose `g` and `rhs` disagree. Always zero for
    /// a correctly maintained planner.
    pub fn inconsistent_outside_queue(&self) -> usize {
        (0..self.g.len())
            .filter(|&i| self.queued[i].is_none() && self.g[i] != self.rhs[i])
            .count()
    }

    /// `g/rhs` per cell as a text grid, `#` for blocked and `-` for infinity.
    pub fn dump_values(&self) -> String {
        let fmt_v = |v: u32| {
            if v == INF {
                "-".to_string()
            } else {
                v.to_string()
            }
        };
        let mut out = String::new();
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| {
                    let i = self.idx(Coord::new(r, c));
                    if self.blocked[i] {
                        "#".to_string()
                    } else {
                        format!("{}/{}", fmt_v(self.g[i]), fmt_v(self.rhs[i]))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> BeliefMap {
        BeliefMap::from_text("5 3\n#####\n.....\n#####\n").unwrap()
    }

    #[test]
    fn init_queues_only_the_goal() {
        let b = BeliefMap::unknown(3, 3);
        let p = Planner::new(&b, Coord::new(0, 0), Coord::new(2, 2)).unwrap();
        assert_eq!(p.queue_snapshot(), vec![(Coord::new(2, 2), Key(4, 0))]);
        assert_eq!(p.km(), 0);
        assert_eq!(p.rhs(Coord::new(2, 2)), PathCost::Finite(0));
        assert_eq!(p.g(Coord::new(2, 2)), PathCost::Infinite);
    }

    #[test]
    fn blocked_goal_is_rejected() {
        let mut b = BeliefMap::unknown(3, 3);
        b.set(Coord::new(1, 1), Knowledge::Blocked);
        assert!(matches!(
            Planner::new(&b, Coord::new(0, 0), Coord::new(1, 1)),
            Err(Error::GoalBlocked(_))
        ));
    }

    #[test]
    fn start_equal_goal_costs_zero() {
        let b = BeliefMap::unknown(3, 3);
        let mut p = Planner::new(&b, Coord::new(1, 1), Coord::new(1, 1)).unwrap();
        let r = p.compute_shortest_path(&b, Coord::new(1, 1));
        assert_eq!(r.path_cost, PathCost::Finite(0));
        assert_eq!(r.next_action, Some(Action::Wait));
    }

    #[test]
    fn empty_grid_manhattan() {
        let b = BeliefMap::unknown(3, 3);
        let mut p = Planner::new(&b, Coord::new(0, 0), Coord::new(2, 2)).unwrap();
        let r = p.compute_shortest_path(&b, Coord::new(0, 0));
        assert_eq!(r.path_cost, PathCost::Finite(4));
        // g ties between Down and Right; Down comes first.
        assert_eq!(r.next_action, Some(Action::Down));
    }

    #[test]
    fn walled_in_start_is_unreachable() {
        let b = BeliefMap::from_text("4 3\n.#..\n##..\n....\n").unwrap();
        let mut p = Planner::new(&b, Coord::new(0, 0), Coord::new(2, 3)).unwrap();
        let r = p.compute_shortest_path(&b, Coord::new(0, 0));
        assert_eq!(
            r,
            PlanResult {
                next_action: None,
                path_cost: PathCost::Infinite
            }
        );
        assert_eq!(p.get_first_action(&b, Coord::new(0, 0)).unwrap(), None);
    }

    #[test]
    fn corridor_descent_and_goal_wait() {
        let b = corridor();
        let mut p = Planner::new(&b, Coord::new(1, 0), Coord::new(1, 4)).unwrap();
        let r = p.compute_shortest_path(&b, Coord::new(1, 0));
        assert_eq!(r.next_action, Some(Action::Right));
        assert_eq!(r.path_cost, PathCost::Finite(4));
        assert_eq!(
            p.get_first_action(&b, Coord::new(1, 4)).unwrap(),
            Some(Action::Wait)
        );
    }

    #[test]
    fn blocking_the_corridor_disconnects() {
        let mut b = corridor();
        let mut p = Planner::new(&b, Coord::new(1, 0), Coord::new(1, 4)).unwrap();
        p.compute_shortest_path(&b, Coord::new(1, 0));
        b.set(Coord::new(1, 2), Knowledge::Blocked);
        assert_eq!(
            p.apply_belief_delta(&b, &[Coord::new(1, 2)], Coord::new(1, 0)),
            1
        );
        let r = p.compute_shortest_path(&b, Coord::new(1, 0));
        assert_eq!(r.path_cost, PathCost::Infinite);
        assert_eq!(r.next_action, None);
    }

    #[test]
    fn empty_delta_changes_nothing() {
        let b = BeliefMap::unknown(6, 6);
        let mut p = Planner::new(&b, Coord::new(0, 0), Coord::new(5, 5)).unwrap();
        let first = p.compute_shortest_path(&b, Coord::new(0, 0));
        let km = p.km();
        assert_eq!(p.apply_belief_delta(&b, &[], Coord::new(0, 1)), 0);
        assert_eq!(p.km(), km);
        assert_eq!(p.compute_shortest_path(&b, Coord::new(0, 0)), first);
    }

    #[test]
    fn stale_planner_is_reported() {
        let mut b = BeliefMap::unknown(4, 4);
        let mut p = Planner::new(&b, Coord::new(0, 0), Coord::new(3, 3)).unwrap();
        p.compute_shortest_path(&b, Coord::new(0, 0));
        b.set(Coord::new(2, 2), Knowledge::Free);
        assert!(matches!(
            p.get_first_action(&b, Coord::new(0, 0)),
            Err(Error::StalePlanner { .. })
        ));
    }

    #[test]
    fn dump_marks_blocked_and_infinite() {
        let b = BeliefMap::from_text("2 1\n.#\n").unwrap();
        let p = Planner::new(&b, Coord::new(0, 0), Coord::new(0, 0)).unwrap();
        assert_eq!(p.dump_values(), "-/0 #\n");
    }
}
