use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use chimera_ttt::generators::gen_ran;
use chimera_ttt::ising::IsingProblem;
use chimera_ttt::par;
use chimera_ttt::solvers::{sa_sample, SAParams, ScheduleKind};
use chimera_ttt::topology::build_chimera;

fn anneal(p: &IsingProblem) -> i64 {
    sa_sample(p, &SAParams::new(200, ScheduleKind::Scaled), 7).unwrap().1
}

fn instances(size: usize, count: usize) -> Vec<IsingProblem> {
    let g = Arc::new(build_chimera(size).unwrap());
    (0..count as u64).map(|s| gen_ran(&g, 3, s).unwrap().problem).collect()
}

fn bench_instance_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("instance_map");
    group.sample_size(10);
    for size in [4, 8] {
        let probs = instances(size, 16);
        group.bench_with_input(BenchmarkId::new("sequential", size), &probs, |b, ps| {
            b.iter(|| black_box(par::map_sequential(ps, anneal)))
        });
        group.bench_with_input(BenchmarkId::new("par", size), &probs, |b, ps| {
            b.iter(|| black_box(par::map(ps, anneal)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_instance_map);
criterion_main!(benches);
