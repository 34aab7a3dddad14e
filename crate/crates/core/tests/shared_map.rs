use std::collections::HashSet;

use pomapf_core::benchmark::{generate_episode, Simulation};
use pomapf_core::grid::{generate_map, Coord};
use pomapf_core::gridworld::{observe, AgentState};
use pomapf_core::shared_map::{extract_delta, BeliefMap, GridMemory, Knowledge, MapDelta};
use pomapf_core::{run_episode, InfoRegime, ScenarioConfig};
use proptest::prelude::*;

fn small(regime: InfoRegime, latency: u32, drop_rate: f64) -> ScenarioConfig {
    ScenarioConfig {
        regime,
        latency,
        drop_rate,
        max_steps: Some(60),
        ..ScenarioConfig::square(16, 0.3, 8)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Known cells agree with the truth and Unknown never grows back, for
    /// every agent at every step under any latency and drop rate.
    #[test]
    fn beliefs_stay_sound_and_monotone(seed in any::<u64>(), latency in 0u32..4, drop_rate in 0.0f64..=1.0) {
        let cfg = small(InfoRegime::Shared, latency, drop_rate);
        let (map, tasks) = generate_episode(&cfg, seed).unwrap();
        let mut sim = Simulation::new(&cfg, &map, &tasks, seed).unwrap();
        let mut unknown: Vec<usize> = sim.beliefs().iter().map(BeliefMap::unknown_count).collect();
        while !sim.is_done() {
            sim.step().unwrap();
            for (i, b) in sim.beliefs().iter().enumerate() {
                for c in map.coords() {
                    let k = b.get(c);
                    prop_assert!(k == Knowledge::Unknown || k == map.get(c).unwrap().into(), "agent {} wrong at {}", i, c);
                }
                prop_assert!(b.unknown_count() <= unknown[i]);
                unknown[i] = b.unknown_count();
            }
        }
    }

    /// With a lossless channel every cell anyone knew at step t is known to
    /// every still-active agent by step t + latency.
    #[test]
    fn lossless_channel_converges_within_latency(seed in any::<u64>(), latency in 0u32..4) {
        let cfg = small(InfoRegime::Shared, latency, 0.0);
        let (map, tasks) = generate_episode(&cfg, seed).unwrap();
        let mut sim = Simulation::new(&cfg, &map, &tasks, seed).unwrap();
        let mut known_at: Vec<HashSet<Coord>> = Vec::new();
        while !sim.is_done() {
            sim.step().unwrap();
            let t = sim.step_index() as usize;
            let union: HashSet<Coord> = sim
                .beliefs()
                .iter()
                .flat_map(|b| map.coords().filter(move |&c| b.get(c) != Knowledge::Unknown))
                .collect();
            known_at.push(union);
            if t > latency as usize {
                let required = &known_at[t - 1 - latency as usize];
                for (a, b) in sim.agents().iter().zip(sim.beliefs()) {
                    if a.active {
                        for &c in required {
                            prop_assert_ne!(b.get(c), Knowledge::Unknown, "agent {} missing {} at step {}", a.id, c, t);
                        }
                    }
                }
            }
        }
    }

    /// A channel that drops everything behaves exactly like no channel.
    #[test]
    fn total_drop_equals_local_only(seed in any::<u64>()) {
        let lossy = run_episode(&small(InfoRegime::Shared, 1, 1.0), seed).unwrap();
        let local = run_episode(&small(InfoRegime::Local, 1, 0.0), seed).unwrap();
        prop_assert_eq!(lossy, local);
    }

    /// Memory bounds always cover what was observed and never forget it.
    #[test]
    fn memory_covers_observations(seed in any::<u64>()) {
        let map = generate_map(24, 24, 0.3, seed);
        let mut memory = GridMemory::new();
        let mut seen = Vec::new();
        for (k, c) in map.free_coords().step_by(7).take(12).enumerate() {
            let agents = vec![AgentState::new(0, c, c)];
            let obs = observe(&map, &agents, 0, 4).unwrap();
            memory.update(&obs);
            seen.extend(obs.visible_cells());
            let bounds = memory.bounds().unwrap();
            for &(cell, truth) in &seen {
                prop_assert!(bounds.contains(cell), "step {}: {} outside bounds", k, cell);
                prop_assert_eq!(memory.get(cell), Knowledge::from(truth));
            }
        }
    }
}

#[test]
fn full_information_beliefs_equal_truth() {
    let cfg = small(InfoRegime::Full, 0, 0.0);
    let (map, tasks) = generate_episode(&cfg, 3).unwrap();
    let mut sim = Simulation::new(&cfg, &map, &tasks, 3).unwrap();
    let truth = BeliefMap::from_truth(&map);
    while !sim.is_done() {
        for b in sim.beliefs() {
            assert_eq!(b.cells(), truth.cells());
        }
        sim.step().unwrap();
    }
}

#[test]
fn delta_carries_only_new_information() {
    let map = generate_map(20, 20, 0.3, 9);
    let c = map.free_coords().nth(50).unwrap();
    let agents = vec![AgentState::new(0, c, c)];
    let obs = observe(&map, &agents, 0, 4).unwrap();
    let mut belief = BeliefMap::unknown(20, 20);
    let first = extract_delta(&obs, &belief, 0, 1);
    let expected = obs.visible_cells().count();
    assert_eq!(first.len(), expected);
    belief.fuse(&first).unwrap();
    assert!(extract_delta(&obs, &belief, 0, 2).is_empty());
    let version = belief.version();
    belief
        .fuse(&MapDelta::new(0, 3, first.entries().to_vec()))
        .unwrap();
    assert_eq!(
        belief.version(),
        version,
        "re-fusing known data must not bump the version"
    );
}
