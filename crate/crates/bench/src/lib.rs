//! Shared fixtures for the criterion benches.

use pomapf_core::benchmark::generate_episode;
use pomapf_core::{BeliefMap, Coord, Knowledge, MapDelta, Planner, ScenarioConfig};

/// A planner that has converged on an empty belief, plus a one-cell reveal
/// that blocks its current route.
#[derive(Clone)]
pub struct RepairCase {
    pub belief: BeliefMap,
    pub planner: Planner,
    pub start: Coord,
    pub reveal: MapDelta,
}

/// Builds a repair case on a `size` x `size` map generated from `seed`.
pub fn repair_case(size: u32, seed: u64) -> RepairCase {
    let cfg = ScenarioConfig::square(size, 0.3, 1);
    let (_, tasks) = generate_episode(&cfg, seed).expect("single agent instance");
    let (start, goal) = (tasks[0].start, tasks[0].goal);
    let belief = BeliefMap::unknown(size, size);
    let mut planner = Planner::new(&belief, start, goal).expect("goal in bounds");
    planner.compute_shortest_path(&belief, start);

    // Walk the current route halfway and block the cell found there.
    let mut pos = start;
    for _ in 0..start.manhattan(goal) / 2 {
        let a = planner
            .get_first_action(&belief, pos)
            .unwrap()
            .expect("route exists");
        pos = pos.step(a, size, size).unwrap();
    }
    let reveal = MapDelta::new(0, 1, [(pos, Knowledge::Blocked)]);
    RepairCase {
        belief,
        planner,
        start,
        reveal,
    }
}
