use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pomapf_bench::repair_case;
use pomapf_core::Planner;

fn repair_vs_replan(c: &mut Criterion) {
    let case = repair_case(64, 11);
    let mut group = c.benchmark_group("planner_64x64");
    group.bench_function("incremental_repair", |b| {
        b.iter_batched(
            || case.clone(),
            |mut k| {
                let changed = k.belief.fuse(&k.reveal).unwrap();
                k.planner.apply_belief_delta(&k.belief, &changed, k.start);
                k.planner.compute_shortest_path(&k.belief, k.start)
            },
            BatchSize::SmallInput,
        )
    });
    group.bench_function("full_replan", |b| {
        b.iter_batched(
            || case.clone(),
            |mut k| {
                k.belief.fuse(&k.reveal).unwrap();
                let mut fresh = Planner::new(&k.belief, k.start, k.planner.goal()).unwrap();
                fresh.compute_shortest_path(&k.belief, k.start)
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, repair_vs_replan);
criterion_main!(benches);
