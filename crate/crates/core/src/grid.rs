//! Static grid maps, coordinates, actions and seeded scenario generation.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Rejected start draws allowed per agent before instance generation gives up.
pub const INSTANCE_RETRY_BUDGET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub row: u32,
    pub col: u32,
}

impl Coord {
    pub const fn new(row: u32, col: u32) -> Self {
        Coord { row, col }
    }

    pub fn manhattan(self, other: Coord) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn chebyshev(self, other: Coord) -> u32 {
        self.row
            .abs_diff(other.row)
            .max(self.col.abs_diff(other.col))
    }

    /// Shifts by `(dr, dc)`, returning `None` when the result leaves a
    /// `width` x `height` map.
    pub fn offset(self, dr: i64, dc: i64, width: u32, height: u32) -> Option<Coord> {
        let r = self.row as i64 + dr;
        let c = self.col as i64 + dc;
        if r < 0 || c < 0 || r >= height as i64 || c >= width as i64 {
            None
        } else {
            Some(Coord::new(r as u32, c as u32))
        }
    }

    pub fn step(self, action: Action, width: u32, height: u32) -> Option<Coord> {
        let (dr, dc) = action.delta();
        self.offset(dr, dc, width, height)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// The five primitive actions. The declaration order is the tie-break order
/// used everywhere a choice between equally good moves has to be made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Wait,
    ];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Wait => (0, 0),
        }
    }

    /// The action that moves from `from` to the 4-neighbor (or same cell) `to`.
    pub fn between(from: Coord, to: Coord) -> Option<Action> {
        let dr = to.row as i64 - from.row as i64;
        let dc = to.col as i64 - from.col as i64;
        Action::ALL.into_iter().find(|a| a.delta() == (dr, dc))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Wait => "wait",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Blocked,
}

/// Ground-truth occupancy grid. Row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridMap {
    width: u32,
    height: u32,
    cells: Vec<Cell>,
}

impl GridMap {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "map must be at least 1x1");
        GridMap {
            width,
            height,
            cells: vec![Cell::Free; width as usize * height as usize],
        }
    }

    pub fn from_cells(width: u32, height: u32, cells: Vec<Cell>) -> Result<Self> {
        if width == 0 || height == 0 || cells.len() != width as usize * height as usize {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "{}x{} map needs {} cells, got {}",
                    width,
                    height,
                    width as usize * height as usize,
                    cells.len()
                ),
            });
        }
        Ok(GridMap {
            width,
            height,
            cells,
        })
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

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.in_bounds(c));
        c.row as usize * self.width as usize + c.col as usize
    }

    pub fn coord(&self, idx: usize) -> Coord {
        Coord::new(
            (idx / self.width as usize) as u32,
            (idx % self.width as usize) as u32,
        )
    }

    pub fn get(&self, c: Coord) -> Option<Cell> {
        self.in_bounds(c).then(|| self.cells[self.index(c)])
    }

    pub fn is_free(&self, c: Coord) -> bool {
        self.get(c) == Some(Cell::Free)
    }

    pub fn set(&mut self, c: Coord, cell: Cell) {
        let i = self.index(c);
        self.cells[i] = cell;
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn blocked_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Blocked).count()
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.cells.len()).map(|i| self.coord(i))
    }

    pub fn free_coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.coords().filter(|&c| self.is_free(c))
    }

    /// In-bounds 4-neighbors in action order, regardless of occupancy.
    pub fn neighbors(&self, c: Coord) -> impl Iterator<Item = Coord> + '_ {
        Action::MOVES
            .into_iter()
            .filter_map(move |a| c.step(a, self.width, self.height))
    }

    /// Labels 4-connected components of free cells; blocked cells get `None`.
    pub fn components(&self) -> Vec<Option<u32>> {
        let mut label = vec![None; self.cells.len()];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..self.cells.len() {
            if self.cells[start] == Cell::Blocked || label[start].is_some() {
                continue;
            }
            label[start] = Some(next);
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for n in self.neighbors(self.coord(i)) {
                    let j = self.index(n);
                    if self.cells[j] == Cell::Free && label[j].is_none() {
                        label[j] = Some(next);
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Plain-text form: a `W H` header then `H` rows of `.`/`#`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.width, self.height);
        for row in self.cells.chunks(self.width as usize) {
            out.extend(row.iter().map(|c| match c {
                Cell::Free => '.',
                Cell::Blocked => '#',
            }));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let (map, _) = parse_map_lines(&mut lines, 0)?;
        Ok(map)
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses a `W H` header followed by `H` grid rows. Returns the map and the
/// number of lines consumed.
pub(crate) fn parse_map_lines<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    first_line: usize,
) -> Result<(GridMap, usize)> {
    let header = lines.next().ok_or(Error::Parse {
        line: first_line + 1,
        msg: "missing `W H` header".into(),
    })?;
    let dims: Vec<u32> = header
        .split_whitespace()
        .map(|t| t.parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: first_line + 1,
            msg: format!("bad header {header:?}: {e}"),
        })?;
    let [width, height] = dims[..] else {
        return Err(Error::Parse {
            line: first_line + 1,
            msg: format!("expected `W H`, got {header:?}"),
        });
    };
    let mut cells = Vec::with_capacity(width as usize * height as usize);
    for r in 0..height as usize {
        let line_no = first_line + r + 2;
        let row = lines.next().ok_or(Error::Parse {
            line: line_no,
            msg: "unexpected end of map".into(),
        })?;
        if row.chars().count() != width as usize {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {width} cells, got {}", row.chars().count()),
            });
        }
        for ch in row.chars() {
            cells.push(match ch {
                '.' => Cell::Free,
                '#' => Cell::Blocked,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unexpected cell character {other:?}"),
                    })
                }
            });
        }
    }
    let map = GridMap::from_cells(width, height, cells)?;
    Ok((map, height as usize + 1))
}

/// One agent's assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Task {
    pub start: Coord,
    pub goal: Coord,
}

/// Serializes tasks as `agent_id sr sc gr gc` lines.
pub fn tasks_to_text(tasks: &[Task]) -> String {
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "{} {} {} {} {}\n",
                i, t.start.row, t.start.col, t.goal.row, t.goal.col
            )
        })
        .collect()
}

pub fn parse_tasks(text: &str) -> Result<Vec<Task>> {
    parse_task_lines(text.lines(), 0)
}

fn parse_task_lines<'a>(
    lines: impl Iterator<Item = &'a str>,
    first_line: usize,
) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = first_line + k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<u32> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad instance line {line:?}: {e}"),
            })?;
        let [id, sr, sc, gr, gc] = nums[..] else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `agent_id sr sc gr gc`, got {line:?}"),
            });
        };
        if id as usize != tasks.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("agent ids must be consecutive from 0, got {id}"),
            });
        }
        tasks.push(Task {
            start: Coord::new(sr, sc),
            goal: Coord::new(gr, gc),
        });
    }
    Ok(tasks)
}

/// Map text followed by instance lines.
pub fn scenario_to_text(map: &GridMap, tasks: &[Task]) -> String {
    let mut out = map.to_text();
    out.push_str(&tasks_to_text(tasks));
    out
}

pub fn parse_scenario(text: &str) -> Result<(GridMap, Vec<Task>)> {
    let mut lines = text.lines();
    let (map, consumed) = parse_map_lines(&mut lines, 0)?;
    let tasks = parse_task_lines(lines, consumed)?;
    for t in &tasks {
        for c in [t.start, t.goal] {
            if !map.in_bounds(c) {
                return Err(Error::OutOfBounds(c));
            }
        }
    }
    Ok((map, tasks))
}

/// Random map with exactly `round(density * width * height)` blocked cells.
pub fn generate_map(width: u32, height: u32, density: f64, seed: u64) -> GridMap {
    assert!(
        (0.0..1.0).contains(&density),
        "obstacle density must lie in [0, 1), got {density}"
    );
    let mut map = GridMap::new(width, height);
    let total = map.len();
    let blocked = ((density * total as f64).round() as usize).min(total);
    let mut rng = rng::rng(rng::derive(seed, 0x6d_6170));
    for i in index::sample(&mut rng, total, blocked) {
        map.cells[i] = Cell::Blocked;
    }
    map
}

/// Samples distinct starts and distinct goals, each goal in its start's
/// connected free component.
pub fn generate_instance(map: &GridMap, n_agents: usize, seed: u64) -> Result<Vec<Task>> {
    let labels = map.components();
    let n_components = labels
        .iter()
        .flatten()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_components];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            members[*l as usize].push(i);
        }
    }
    let free: Vec<usize> = (0..map.len()).filter(|&i| labels[i].is_some()).collect();

    let mut rng = rng::rng(rng::derive(seed, 0x696e_7374));
    let mut start_used = vec![false; map.len()];
    let mut goal_used = vec![false; map.len()];
    let mut tasks = Vec::with_capacity(n_agents);
    let infeasible = Error::InstanceInfeasible {
        agents: n_agents,
        budget: INSTANCE_RETRY_BUDGET,
    };
    if free.is_empty() && n_agents > 0 {
        return Err(infeasible);
    }
    for _ in 0..n_agents {
        let mut placed = None;
        for _ in 0..=INSTANCE_RETRY_BUDGET {
            let s = free[rng.gen_range(0..free.len())];
            if start_used[s] {
                continue;
            }
            let comp = &members[labels[s].unwrap() as usize];
            let open = comp.iter().filter(|&&g| g != s && !goal_used[g]).count();
            if open == 0 {
                continue;
            }
            let pick = rng.gen_range(0..open);
            let g = *comp
                .iter()
                .filter(|&&g| g != s && !goal_used[g])
                .nth(pick)
                .unwrap();
            placed = Some((s, g));
            break;
        }
        let Some((s, g)) = placed else {
            return Err(infeasible);
        };
        start_used[s] = true;
        goal_used[g] = true;
        tasks.push(Task {
            start: map.coord(s),
            goal: map.coord(g),
        });
    }
    Ok(tasks)
}
