use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use levy_penalize::azema_yor::WeightFn;
use levy_penalize::exec::Runtime;
use levy_penalize::levy_models::LevyModel;
use levy_penalize::penalization::{importance_sample_penalized, penalized_target, FunctionalSpec, McConfig};

fn runtimes() -> [(&'static str, Runtime); 2] {
    [("sequential", Runtime::Sequential), ("parallel", Runtime::Parallel)]
}

fn penalized_target_bench(c: &mut Criterion) {
    let f = WeightFn::indicator(1.0).unwrap();
    let mut group = c.benchmark_group("penalized_target");
    group.sample_size(10);
    for (model_name, model) in [("brownian", LevyModel::brownian()), ("cauchy", LevyModel::cauchy())] {
        for (name, runtime) in runtimes() {
            let cfg = McConfig {
                runtime,
                ..McConfig::new(20_000, 1e-3, 1)
            };
            group.bench_with_input(BenchmarkId::new(name, model_name), &cfg, |b, cfg| {
                b.iter(|| {
                    penalized_target(&f, &model, FunctionalSpec::IndicatorXle { b: 0.0 }, black_box(0.25), cfg)
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn importance_sample_bench(c: &mut Criterion) {
    let f = WeightFn::indicator(1.0).unwrap();
    let model = LevyModel::brownian();
    let mut group = c.benchmark_group("importance_sample");
    group.sample_size(10);
    for (name, runtime) in runtimes() {
        let cfg = McConfig {
            runtime,
            ..McConfig::new(20_000, 1e-2, 2)
        };
        group.bench_function(name, |b| {
            b.iter(|| importance_sample_penalized(&f, &model, black_box(4.0), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, penalized_target_bench, importance_sample_bench);
criterion_main!(benches);
