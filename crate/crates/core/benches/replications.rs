//! Replication batches and per-particle work, sequential vs rayon.

use std::hint::black_box;

use apf_core::adaptation::{ProposalKind, Target, WeightStrategy};
use apf_core::filters::{run_filter, FilterConfig};
use apf_core::models::{kalman_filter, LinearGaussianAR1};
use apf_core::parallel::Execution;
use apf_core::rng::{Stage, StreamKey};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const RECORD: [f64; 11] = [0.15, 0.3, 0.12, -0.05, 0.2, 0.41, 0.33, 0.1, -0.12, 0.02, 0.18];

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn replications(c: &mut Criterion) {
    let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
    let exact: Vec<f64> = kalman_filter(&model, &RECORD).iter().map(|g| g.mean).collect();
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, cfg) in [
        ("bootstrap", FilterConfig::bootstrap(1000)),
        (
            "optimal-exact",
            FilterConfig::ssapf(1000, WeightStrategy::OptimalExact, ProposalKind::Prior),
        ),
    ] {
        for (mode, exec) in modes() {
            group.bench_function(BenchmarkId::new(name, mode), |b| {
                b.iter(|| {
                    exec.map_range(32, |r| {
                        let mut rng = StreamKey::new(1, r as u64).stream(Stage::Filter);
                        run_filter(&cfg, &model, &RECORD, &Target::Projection, Some(&exact), &mut rng)
                            .unwrap()
                            .estimates[10]
                    })
                })
            });
        }
    }
    group.finish();
}

fn particles(c: &mut Criterion) {
    let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
    let exact: Vec<f64> = kalman_filter(&model, &RECORD).iter().map(|g| g.mean).collect();
    let mut group = c.benchmark_group("single-run");
    group.sample_size(10);
    for (mode, exec) in modes() {
        let cfg = FilterConfig {
            particle_execution: exec,
            ..FilterConfig::ssapf(100_000, WeightStrategy::OptimalExact, ProposalKind::Prior)
        };
        group.bench_function(BenchmarkId::new("optimal-exact-100k", mode), |b| {
            b.iter(|| {
                let mut rng = StreamKey::new(2, 0).stream(Stage::Filter);
                black_box(run_filter(&cfg, &model, &RECORD, &Target::Projection, Some(&exact), &mut rng).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, replications, particles);
criterion_main!(benches);
