use std::collections::HashSet;

use pomapf_core::grid::{
    generate_instance, generate_map, parse_scenario, scenario_to_text, Action, Cell, Coord, GridMap,
};
use pomapf_core::gridworld::{apply_joint_action, observe, AgentState};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blocked_oracle(w: u32, h: u32, density: f64) -> usize {
    (density * f64::from(w) * f64::from(h)).round() as usize
}

#[test]
fn blocked_count_is_exact_over_many_parameterizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..1000u64 {
        let (w, h) = (rng.gen_range(1..70), rng.gen_range(1..70));
        let density = rng.gen_range(0.0..0.95);
        let map = generate_map(w, h, density, seed);
        assert_eq!(
            map.blocked_count(),
            blocked_oracle(w, h, density),
            "{w}x{h} @ {density}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Random joint actions never execute a vertex or swap conflict.
    #[test]
    fn executed_moves_never_conflict(seed in any::<u64>(), n in 2usize..24) {
        let map = generate_map(12, 12, 0.2, seed);
        let tasks = generate_instance(&map, n, seed).unwrap();
        let mut agents: Vec<_> = tasks.iter().enumerate().map(|(i, t)| AgentState::new(i, t.start, t.goal)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 1..=40 {
            let before: Vec<_> = agents.iter().map(|a| (a.pos, a.active)).collect();
            let actions: Vec<_> = agents
                .iter()
                .map(|a| if a.active { *Action::ALL.choose(&mut rng).unwrap() } else { Action::Wait })
                .collect();
            apply_joint_action(&map, &mut agents, &actions, step).unwrap();
            let live: Vec<usize> = (0..n).filter(|&i| agents[i].active).collect();
            let cells: HashSet<Coord> = live.iter().map(|&i| agents[i].pos).collect();
            prop_assert_eq!(cells.len(), live.len(), "vertex conflict at step {}", step);
            for &i in &live {
                prop_assert_eq!(map.get(agents[i].pos), Some(Cell::Free));
                for &j in &live {
                    if i != j && before[i].1 && before[j].1 {
                        prop_assert!(
                            !(before[i].0 == agents[j].pos && before[j].0 == agents[i].pos && before[i].0 != before[j].0),
                            "swap between {} and {}", i, j
                        );
                    }
                }
            }
        }
    }

    /// Changing a cell outside the observer's window leaves the observation unchanged.
    #[test]
    fn observation_is_local(seed in any::<u64>(), r in 0u32..20, c in 0u32..20, far_r in 0u32..20, far_c in 0u32..20) {
        let map = generate_map(20, 20, 0.3, seed);
        let center = Coord::new(r, c);
        let far = Coord::new(far_r, far_c);
        prop_assume!(center.chebyshev(far) > 4);
        let agents = vec![AgentState::new(0, center, center)];
        let mut flipped = map.clone();
        let other = match map.get(far).unwrap() { Cell::Free => Cell::Blocked, Cell::Blocked => Cell::Free };
        flipped.set(far, other);
        let mut moved = agents.clone();
        moved.push(AgentState::new(1, far, far));
        let base = observe(&map, &agents, 0, 4).unwrap();
        prop_assert_eq!(&base, &observe(&flipped, &agents, 0, 4).unwrap());
        prop_assert_eq!(&base, &observe(&map, &moved, 0, 4).unwrap());
    }

    #[test]
    fn scenario_text_round_trips(seed in any::<u64>(), w in 2u32..30, h in 2u32..30) {
        let map = generate_map(w, h, 0.25, seed);
        let n = (map.free_coords().count() / 3).min(6);
        let tasks = generate_instance(&map, n, seed).unwrap();
        let (map2, tasks2) = parse_scenario(&scenario_to_text(&map, &tasks)).unwrap();
        prop_assert_eq!(map2, map);
        prop_assert_eq!(tasks2, tasks);
    }
}

#[test]
fn instance_goals_are_reachable_and_distinct() {
    for seed in 0..50 {
        let map = generate_map(20, 20, 0.3, seed);
        let tasks = generate_instance(&map, 16, seed).unwrap();
        let labels = map.components();
        let goals: HashSet<_> = tasks.iter().map(|t| t.goal).collect();
        let starts: HashSet<_> = tasks.iter().map(|t| t.start).collect();
        assert_eq!(goals.len(), 16);
        assert_eq!(starts.len(), 16);
        for t in &tasks {
            assert_ne!(t.start, t.goal);
            assert_eq!(labels[map.index(t.start)], labels[map.index(t.goal)]);
        }
    }
}

#[test]
fn agent_may_follow_a_moving_agent() {
    let map = GridMap::new(4, 1);
    let mut agents = vec![
        AgentState::new(0, Coord::new(0, 0), Coord::new(0, 3)),
        AgentState::new(1, Coord::new(0, 1), Coord::new(0, 3)),
    ];
    let out = apply_joint_action(&map, &mut agents, &[Action::Right, Action::Right], 1).unwrap();
    assert!(out.collisions.is_empty());
    assert_eq!(out.new_positions, vec![Coord::new(0, 1), Coord::new(0, 2)]);
}
