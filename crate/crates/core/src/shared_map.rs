//! Per-agent beliefs, observation deltas and the channel that spreads them.
//!
//! The team map is replicated: every agent owns a [`BeliefMap`] and fuses the
//! deltas its teammates broadcast. Knowledge only ever moves from `Unknown` to
//! `Free` or `Blocked`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Cell, Coord, GridMap};
use crate::gridworld::Observation;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Knowledge {
    #[default]
    Unknown,
    Free,
    Blocked,
}

impl Knowledge {
    fn name(self) -> &'static str {
        match self {
            Knowledge::Unknown => "unknown",
            Knowledge::Free => "free",
            Knowledge::Blocked => "blocked",
        }
    }

    /// Unknown cells are planned through.
    pub fn traversable(self) -> bool {
        self != Knowledge::Blocked
    }
}

impl From<Cell> for Knowledge {
    fn from(c: Cell) -> Self {
        match c {
            Cell::Free => Knowledge::Free,
            Cell::Blocked => Knowledge::Blocked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BeliefMap {
    width: u32,
    height: u32,
    cells: Vec<Knowledge>,
    version: u64,
}

impl BeliefMap {
    pub fn unknown(width: u32, height: u32) -> Self {
        BeliefMap {
            width,
            height,
            cells: vec![Knowledge::Unknown; width as usize * height as usize],
            version: 0,
        }
    }

    /// Complete knowledge of `map`.
    pub fn from_truth(map: &GridMap) -> Self {
        BeliefMap {
            width: map.width(),
            height: map.height(),
            cells: map.cells().iter().map(|&c| c.into()).collect(),
            version: 0,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn index(&self, c: Coord) -> usize {
        c.row as usize * self.width as usize + c.col as usize
    }

    pub fn coord(&self, idx: usize) -> Coord {
        Coord::new(
            (idx / self.width as usize) as u32,
            (idx % self.width as usize) as u32,
        )
    }

    pub fn get(&self, c: Coord) -> Knowledge {
        self.cells[self.index(c)]
    }

    pub fn cells(&self) -> &[Knowledge] {
        &self.cells
    }

    pub fn unknown_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|&&k| k == Knowledge::Unknown)
            .count()
    }

    /// Writes a single cell, bumping the version. Test fixtures and
    /// planner benchmarks use this to build arbitrary beliefs.
    pub fn set(&mut self, c: Coord, k: Knowledge) {
        let i = self.index(c);
        if self.cells[i] != k {
            self.cells[i] = k;
            self.version += 1;
        }
    }

    /// Fuses `delta`, returning the cells whose value changed in
    /// ascending order. The version advances iff something changed.
    pub fn fuse(&mut self, delta: &MapDelta) -> Result<Vec<Coord>> {
        for &(c, v) in &delta.entries {
            if !self.in_bounds(c) {
                return Err(Error::OutOfBounds(c));
            }
            let known = self.get(c);
            if known != Knowledge::Unknown && known != v {
                return Err(Error::ConflictingEvidence {
                    cell: c,
                    claimed: v.name(),
                    known: known.name(),
                });
            }
        }
        let mut changed = Vec::new();
        for &(c, v) in &delta.entries {
            let i = self.index(c);
            if self.cells[i] == Knowledge::Unknown {
                self.cells[i] = v;
                changed.push(c);
            }
        }
        if !changed.is_empty() {
            self.version += 1;
        }
        Ok(changed)
    }

    /// Text grid like [`GridMap::to_text`] with `?` for unknown cells.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() + self.height as usize + 16);
        let _ = writeln!(out, "{} {}", self.width, self.height);
        for row in self.cells.chunks(self.width as usize) {
            out.extend(row.iter().map(|k| match k {
                Knowledge::Unknown => '?',
                Knowledge::Free => '.',
                Knowledge::Blocked => '#',
            }));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `W H` header".into(),
        })?;
        let mut dims = header.split_whitespace().map(str::parse::<u32>);
        let (Some(Ok(width)), Some(Ok(height)), None) = (dims.next(), dims.next(), dims.next())
        else {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected `W H`, got {header:?}"),
            });
        };
        let mut belief = BeliefMap::unknown(width, height);
        for r in 0..height as usize {
            let row = lines.next().ok_or(Error::Parse {
                line: r + 2,
                msg: "unexpected end of map".into(),
            })?;
            if row.chars().count() != width as usize {
                return Err(Error::Parse {
                    line: r + 2,
                    msg: format!("expected {width} cells, got {}", row.chars().count()),
                });
            }
            for (c, ch) in row.chars().enumerate() {
                belief.cells[r * width as usize + c] = match ch {
                    '?' => Knowledge::Unknown,
                    '.' => Knowledge::Free,
                    '#' => Knowledge::Blocked,
                    other => {
                        return Err(Error::Parse {
                            line: r + 2,
                            msg: format!("unexpected cell character {other:?}"),
                        })
                    }
                };
            }
        }
        Ok(belief)
    }
}

/// Newly learned cells from one agent at one step. Entries are sorted by
/// coordinate and hold one value per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MapDelta {
    pub origin: usize,
    pub step: u32,
    entries: Vec<(Coord, Knowledge)>,
}

impl MapDelta {
    /// Builds a delta; later duplicates of a coordinate overwrite earlier
    /// ones. `Unknown` values are dropped.
    pub fn new(
        origin: usize,
        step: u32,
        entries: impl IntoIterator<Item = (Coord, Knowledge)>,
    ) -> Self {
        let map: BTreeMap<Coord, Knowledge> = entries
            .into_iter()
            .filter(|(_, k)| *k != Knowledge::Unknown)
            .collect();
        MapDelta {
            origin,
            step,
            entries: map.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(Coord, Knowledge)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Cells in the observation window that `belief` does not know yet.
pub fn extract_delta(obs: &Observation, belief: &BeliefMap, origin: usize, step: u32) -> MapDelta {
    let entries = obs.visible_cells().filter_map(|(c, cell)| {
        let seen = Knowledge::from(cell);
        let known = belief.get(c);
        debug_assert!(
            known == Knowledge::Unknown || known == seen,
            "belief disagrees with observation at {c}"
        );
        (known == Knowledge::Unknown).then_some((c, seen))
    });
    MapDelta::new(origin, step, entries)
}

/// 4-neighbor edges touching newly blocked cells, as ordered pairs
/// `(blocked, neighbor)`. Edges into the border are not edges.
pub fn remove_blocked_edges(changed: &[Coord], belief: &BeliefMap) -> BTreeSet<(Coord, Coord)> {
    let mut removed = BTreeSet::new();
    for &c in changed {
        if belief.get(c) != Knowledge::Blocked {
            continue;
        }
        for a in crate::grid::Action::MOVES {
            if let Some(n) = c.step(a, belief.width, belief.height) {
                removed.insert((c.min(n), c.max(n)));
            }
        }
    }
    removed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub top: u32,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
}

impl Rect {
    pub fn height(&self) -> usize {
        (self.bottom - self.top + 1) as usize
    }

    pub fn width(&self) -> usize {
        (self.right - self.left + 1) as usize
    }

    pub fn contains(&self, c: Coord) -> bool {
        (self.top..=self.bottom).contains(&c.row) && (self.left..=self.right).contains(&c.col)
    }

    fn union(self, o: Rect) -> Rect {
        Rect {
            top: self.top.min(o.top),
            left: self.left.min(o.left),
            bottom: self.bottom.max(o.bottom),
            right: self.right.max(o.right),
        }
    }
}

/// An agent's own record of everything it has observed, stored in a
/// rectangle that grows as new territory comes into view.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridMemory {
    bounds: Option<Rect>,
    cells: Vec<Knowledge>,
}

impl GridMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bounds(&self) -> Option<Rect> {
        self.bounds
    }

    pub fn get(&self, c: Coord) -> Knowledge {
        match self.bounds {
            Some(b) if b.contains(c) => {
                self.cells[(c.row - b.top) as usize * b.width() + (c.col - b.left) as usize]
            }
            _ => Knowledge::Unknown,
        }
    }

    fn grow(&mut self, to: Rect) {
        let next = match self.bounds {
            None => to,
            Some(b) => b.union(to),
        };
        if Some(next) == self.bounds {
            return;
        }
        let mut cells = vec![Knowledge::Unknown; next.width() * next.height()];
        if let Some(b) = self.bounds {
            for r in 0..b.height() {
                let dst = (b.top as usize + r - next.top as usize) * next.width()
                    + (b.left - next.left) as usize;
                cells[dst..dst + b.width()]
                    .copy_from_slice(&self.cells[r * b.width()..(r + 1) * b.width()]);
            }
        }
        self.bounds = Some(next);
        self.cells = cells;
    }

    /// Grows the bounds to the in-bounds part of the window and records
    /// every visible cell.
    pub fn update(&mut self, obs: &Observation) {
        let mut window: Option<Rect> = None;
        for (c, _) in obs.visible_cells() {
            let r = Rect {
                top: c.row,
                left: c.col,
                bottom: c.row,
                right: c.col,
            };
            window = Some(window.map_or(r, |w| w.union(r)));
        }
        let Some(window) = window else { return };
        self.grow(window);
        let b = self.bounds.unwrap();
        for (c, cell) in obs.visible_cells() {
            self.cells[(c.row - b.top) as usize * b.width() + (c.col - b.left) as usize] =
                cell.into();
        }
    }
}

/// Delayed, lossy broadcast of deltas to every other agent.
#[derive(Debug, Clone)]
pub struct CommChannel {
    latency: u32,
    drop_rate: f64,
    n_agents: usize,
    rng: ChaCha8Rng,
    in_flight: VecDeque<Envelope>,
}

#[derive(Debug, Clone)]
struct Envelope {
    deliver_at: u32,
    delta: Arc<MapDelta>,
    recipients: Vec<usize>,
}

impl CommChannel {
    pub fn new(n_agents: usize, latency: u32, drop_rate: f64, seed: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&drop_rate),
            "drop rate must lie in [0, 1]"
        );
        CommChannel {
            latency,
            drop_rate,
            n_agents,
            rng: rng::rng(rng::derive(seed, 0x636f_6d6d)),
            in_flight: VecDeque::new(),
        }
    }

    pub fn latency(&self) -> u32 {
        self.latency
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Queues `delta` for every agent except its origin, dropping each copy
    /// independently with probability `drop_rate`.
    pub fn broadcast(&mut self, delta: MapDelta, step: u32) {
        if delta.is_empty() {
            return;
        }
        let origin = delta.origin;
        let recipients: Vec<usize> = (0..self.n_agents)
            .filter(|&r| r != origin)
            .filter(|_| {
                if self.drop_rate <= 0.0 {
                    true
                } else if self.drop_rate >= 1.0 {
                    false
                } else {
                    !self.rng.gen_bool(self.drop_rate)
                }
            })
            .collect();
        if recipients.is_empty() {
            return;
        }
        self.in_flight.push_back(Envelope {
            deliver_at: step + self.latency,
            delta: Arc::new(delta),
            recipients,
        });
    }

    /// Removes and returns every envelope due by `step`, in emission order.
    pub fn deliver(&mut self, step: u32) -> Vec<(Arc<MapDelta>, Vec<usize>)> {
        let mut due = Vec::new();
        // Envelopes share one latency, so the queue is ordered by delivery step.
        while self.in_flight.front().is_some_and(|e| e.deliver_at <= step) {
            let e = self.in_flight.pop_front().unwrap();
            due.push((e.delta, e.recipients));
        }
        due
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::generate_map;
    use crate::gridworld::{observe, AgentState};

    fn obs_at(map: &GridMap, pos: Coord) -> Observation {
        let a = vec![AgentState::new(0, pos, pos)];
        observe(map, &a, 0, 4).unwrap()
    }

    #[test]
    fn fresh_interior_observation_yields_81_cells() {
        let map = generate_map(20, 20, 0.3, 1);
        let belief = BeliefMap::unknown(20, 20);
        let d = extract_delta(&obs_at(&map, Coord::new(10, 10)), &belief, 0, 0);
        assert_eq!(d.len(), 81);
    }

    #[test]
    fn known_window_yields_empty_delta() {
        let map = generate_map(20, 20, 0.3, 1);
        let belief = BeliefMap::from_truth(&map);
        assert!(extract_delta(&obs_at(&map, Coord::new(10, 10)), &belief, 0, 0).is_empty());
    }

    #[test]
    fn edge_window_excludes_out_of_bounds() {
        let map = GridMap::new(20, 20);
        let belief = BeliefMap::unknown(20, 20);
        let d = extract_delta(&obs_at(&map, Coord::new(0, 10)), &belief, 0, 0);
        assert_eq!(d.len(), 5 * 9);
        assert!(d.entries().iter().all(|(c, _)| map.in_bounds(*c)));
    }

    #[test]
    fn fuse_identity_and_idempotence() {
        let map = generate_map(10, 10, 0.3, 2);
        let mut b = BeliefMap::unknown(10, 10);
        let v0 = b.version();
        assert!(b.fuse(&MapDelta::new(0, 0, [])).unwrap().is_empty());
        assert_eq!(b.version(), v0);

        let d = extract_delta(&obs_at(&map, Coord::new(5, 5)), &b, 0, 0);
        let changed = b.fuse(&d).unwrap();
        assert_eq!(changed.len(), d.len());
        let snapshot = b.clone();
        assert!(b.fuse(&d).unwrap().is_empty());
        assert_eq!(b, snapshot);
    }

    #[test]
    fn contradicting_evidence_is_an_error() {
        let mut b = BeliefMap::unknown(3, 3);
        b.fuse(&MapDelta::new(0, 0, [(Coord::new(1, 1), Knowledge::Free)]))
            .unwrap();
        let err = b
            .fuse(&MapDelta::new(
                1,
                0,
                [(Coord::new(1, 1), Knowledge::Blocked)],
            ))
            .unwrap_err();
        assert!(matches!(err, Error::ConflictingEvidence { .. }));
    }

    #[test]
    fn blocked_edge_degree() {
        let mut b = BeliefMap::unknown(5, 5);
        b.set(Coord::new(2, 2), Knowledge::Blocked);
        b.set(Coord::new(0, 0), Knowledge::Blocked);
        b.set(Coord::new(4, 4), Knowledge::Free);
        assert_eq!(remove_blocked_edges(&[Coord::new(2, 2)], &b).len(), 4);
        assert_eq!(remove_blocked_edges(&[Coord::new(0, 0)], &b).len(), 2);
        assert!(remove_blocked_edges(&[Coord::new(4, 4)], &b).is_empty());
    }

    #[test]
    fn belief_text_round_trip() {
        let mut b = BeliefMap::unknown(4, 3);
        b.set(Coord::new(0, 1), Knowledge::Blocked);
        b.set(Coord::new(2, 3), Knowledge::Free);
        let text = b.to_text();
        assert_eq!(text, "4 3\n?#??\n????\n???.\n");
        assert_eq!(BeliefMap::from_text(&text).unwrap().cells(), b.cells());
    }

    #[test]
    fn memory_bounds_follow_observations() {
        let map = GridMap::new(30, 30);
        let mut mem = GridMemory::new();
        mem.update(&obs_at(&map, Coord::new(10, 10)));
        assert_eq!(
            mem.bounds(),
            Some(Rect {
                top: 6,
                left: 6,
                bottom: 14,
                right: 14
            })
        );
        let before = mem.clone();
        mem.update(&obs_at(&map, Coord::new(10, 10)));
        assert_eq!(mem, before);

        mem.update(&obs_at(&map, Coord::new(25, 2)));
        assert_eq!(
            mem.bounds(),
            Some(Rect {
                top: 6,
                left: 0,
                bottom: 29,
                right: 14
            })
        );
        assert_eq!(mem.get(Coord::new(10, 10)), Knowledge::Free);
        assert_eq!(mem.get(Coord::new(15, 10)), Knowledge::Unknown);
        assert_eq!(mem.get(Coord::new(29, 0)), Knowledge::Free);
    }

    #[test]
    fn channel_latency_and_drop() {
        let d = MapDelta::new(0, 0, [(Coord::new(0, 0), Knowledge::Free)]);
        let mut ch = CommChannel::new(3, 3, 0.0, 9);
        ch.broadcast(d.clone(), 5);
        assert!(ch.deliver(7).is_empty());
        let got = ch.deliver(8);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1, vec![1, 2]);

        let mut lossy = CommChannel::new(3, 0, 1.0, 9);
        lossy.broadcast(d, 0);
        assert!(lossy.deliver(0).is_empty());
    }
}
