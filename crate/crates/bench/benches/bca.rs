use cgw_bench::square_pair;
use cgw_core::{cgw_solve, ConeKernel, SolverConfig, TensorPolicy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

/// Ten sweeps of the ascent from one start, no early stopping.
fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("bca_10_sweeps");
    group.sample_size(10);
    for n in [20, 60, 100, 250] {
        let (x, y) = square_pair(n, 3);
        for (name, policy) in [("dense", TensorPolicy::dense()), ("factored", TensorPolicy::factored(64))] {
            if name == "dense" && n > 60 {
                continue;
            }
            let cfg = SolverConfig::new(ConeKernel::truncated_cosine(0.5).unwrap())
                .with_restarts(1)
                .with_iters(10, f64::MIN_POSITIVE)
                .with_policy(policy);
            group.bench_function(BenchmarkId::new(name, n), |b| b.iter(|| cgw_solve(&x, &y, &cfg).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
