use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bidshade::exec::Exec;
use bidshade::experiment::ExperimentConfig;
use bidshade::landscape::{generate_feedback_with, ExplorationPolicy};
use bidshade::shading::{shade_batch, ShadeConfig};
use bidshade::winrate::{LogisticObjective, WinRateModel};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn bench(c: &mut Criterion) {
    let config = ExperimentConfig {
        n_train: 50_000,
        n_eval: 50_000,
        seed: 1,
        ..ExperimentConfig::default()
    };
    let sim = config.simulate(Exec::Sequential).unwrap();
    let dim = sim.vocabulary.dim();

    let mut group = c.benchmark_group("feedback");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                generate_feedback_with(
                    &config.landscape,
                    &ExplorationPolicy::default(),
                    black_box(&sim.eval_requests),
                    true,
                    7,
                    exec,
                )
            })
        });
    }
    group.finish();

    let objective = LogisticObjective::for_feedback(&sim.train.records, 0.0).unwrap();
    let theta = vec![0.1; objective.n_params()];
    let mut group = c.benchmark_group("gradient");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| objective.gradient(black_box(&theta), exec))
        });
    }
    group.finish();

    let model = WinRateModel::new(0.2, vec![0.1; dim], 2.0, 0.6).unwrap();
    let shade = ShadeConfig::default();
    let mut group = c.benchmark_group("shade_batch");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| shade_batch(&model, black_box(&sim.eval_requests), &shade, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
