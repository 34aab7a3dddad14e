#![allow(dead_code)]

use std::collections::VecDeque;

use pomapf_core::grid::{Cell, Coord, GridMap};
use pomapf_core::shared_map::{BeliefMap, Knowledge};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Breadth-first distances to `goal` over non-blocked belief cells.
pub fn bfs_distances(belief: &BeliefMap, goal: Coord) -> Vec<Option<u32>> {
    let (w, h) = (belief.width(), belief.height());
    let mut dist = vec![None; belief.len()];
    if belief.get(goal) == Knowledge::Blocked {
        return dist;
    }
    let mut queue = VecDeque::from([goal]);
    dist[belief.index(goal)] = Some(0);
    while let Some(c) = queue.pop_front() {
        let d = dist[belief.index(c)].unwrap();
        let (r, cc) = (c.row as i64, c.col as i64);
        for (nr, nc) in [(r - 1, cc), (r + 1, cc), (r, cc - 1), (r, cc + 1)] {
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let n = Coord::new(nr as u32, nc as u32);
            let i = belief.index(n);
            if dist[i].is_none() && belief.get(n) != Knowledge::Blocked {
                dist[i] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

pub fn random_coord(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Coord {
    Coord::new(rng.gen_range(0..h), rng.gen_range(0..w))
}

/// A belief over a random truth: each cell known with probability `known`.
pub fn random_belief(rng: &mut ChaCha8Rng, truth: &GridMap, known: f64) -> BeliefMap {
    let mut b = BeliefMap::unknown(truth.width(), truth.height());
    for c in truth.coords().collect::<Vec<_>>() {
        if rng.gen_bool(known) {
            b.set(c, truth.get(c).unwrap().into());
        }
    }
    b
}

/// Single-lane corridor along row 2 with a dead-end bay two cells deep
/// rising from its middle column. Everything else is wall.
pub fn bay_corridor(len: u32) -> GridMap {
    let mut map = GridMap::new(len, 4);
    for c in 0..len {
        for r in [0, 1, 3] {
            if r == 3 || c != len / 2 {
                map.set(Coord::new(r, c), Cell::Blocked);
            }
        }
    }
    map
}
