//! Batch objective/gradient throughput: rayon pool vs current thread.
//!
//! Both paths share the chunked deterministic reduction, so this
//! measures pure dispatch overhead/speedup at training-relevant batch
//! sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use stokes_dgm::objective::{batch_objective_weighted, objective_gradient_weighted};
use stokes_dgm::{Architecture, Dataset, ExecMode, LossWeights, NetworkField, NetworkParams, StokesProblem};

fn bench_objective(c: &mut Criterion) {
    let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
    let arch = Architecture::arch_k(2, 2);
    let params = NetworkParams::init(&arch, 7).unwrap();
    let weights = LossWeights::default();

    let mut group = c.benchmark_group("batch_objective");
    for &n in &[128usize, 1024] {
        let ds = Dataset::sample(2, n + n / 4, 0.2, 3).unwrap();
        for (label, mode) in [("parallel", ExecMode::Auto), ("sequential", ExecMode::Sequential)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                let field = NetworkField::new(&params);
                b.iter(|| {
                    batch_objective_weighted(&field, &problem, &ds.interior, &ds.boundary, &weights, mode)
                        .unwrap()
                })
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("objective_gradient");
    for &n in &[128usize, 1024] {
        let ds = Dataset::sample(2, n + n / 4, 0.2, 3).unwrap();
        for (label, mode) in [("parallel", ExecMode::Auto), ("sequential", ExecMode::Sequential)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                b.iter(|| {
                    objective_gradient_weighted(&params, &problem, &ds.interior, &ds.boundary, &weights, mode)
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_objective);
criterion_main!(benches);
