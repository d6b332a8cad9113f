use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use omnivat::cli::ablate::{run_ablation, SeedData};
use omnivat::data::{synth_suite, SynthConfig};
use omnivat::dtg::Generator;
use omnivat::model::{draw_batch, Model, TrainConfig, Variant};
use omnivat::par::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn inference(c: &mut Criterion) {
    let suite = synth_suite(&SynthConfig::default()).unwrap();
    let model = Model::new(TrainConfig::default()).unwrap();
    let pairs = &suite.targets[0].pairs;
    let mut group = c.benchmark_group("infer_target_domain");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| model.infer(pairs, exec).unwrap()));
    }
    group.finish();
}

fn gradient_check(c: &mut Criterion) {
    let cfg = TrainConfig { dim: 8, expansion: 2, depth: 2, batch: 4, classes: 3, ..TrainConfig::default() };
    let suite = synth_suite(&SynthConfig { dim: 8, classes: 3, per_class: 4, ..SynthConfig::default() }).unwrap();
    let model = Model::new(cfg).unwrap();
    let batch = draw_batch(&suite.source, &[0, 4, 8, 9], &mut ChaCha8Rng::seed_from_u64(0));
    let mut group = c.benchmark_group("finite_difference_check");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.gradient_check(&batch, 1e-4, exec).unwrap())
        });
    }
    group.finish();
}

fn ablation(c: &mut Criterion) {
    let base = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let data: Vec<SeedData> = (0..2)
        .map(|seed| SeedData::from_suite(seed, synth_suite(&SynthConfig { seed, ..SynthConfig::default() }).unwrap()))
        .collect();
    let mut group = c.benchmark_group("ablation_two_epochs");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_ablation(&base, &data, &[Variant::CeOnly, Variant::Full], &Generator::ALL, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, inference, gradient_check, ablation);
criterion_main!(benches);
