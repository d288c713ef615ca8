//! Single-thread pool against the default pool on the hot paths.
//!
//! `cargo bench -p mattekit` times both pools; building with
//! `--no-default-features` replaces rayon with plain loops, in which case
//! both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mattekit::data::{synth_dataset, Sample, SynthConfig};
use mattekit::guided::GuidedFilterConfig;
use mattekit::metrics::evaluate;
use mattekit::parallel::{current_threads, with_threads};
use mattekit::training::{train_from, AugmentConfig, TrainConfig};
use mattekit::{predict, ModelParams, Refiner, Shape, Tensor};

fn pools() -> [(String, Option<usize>); 2] {
    [("1 thread".into(), Some(1)), (format!("{} threads", current_threads()), None)]
}

fn samples(n: usize) -> Vec<Sample> {
    synth_dataset(n, 0, &SynthConfig::default()).unwrap().into_iter().map(|s| s.sample).collect()
}

fn forward(c: &mut Criterion) {
    let params = ModelParams::default_init(0).unwrap();
    let image = Tensor::from_fn(Shape::new(1, 3, 128, 128), |_, ch, y, x| ((x * 7 + y * 3 + ch) % 17) as f32 / 17.0);
    let mut g = c.benchmark_group("forward_128");
    for refiner in [Refiner::Feathering, Refiner::GuidedFilter(GuidedFilterConfig::default())] {
        for (label, threads) in pools() {
            g.bench_with_input(BenchmarkId::new(refiner.label(), &label), &threads, |b, &t| {
                with_threads(t, || b.iter(|| predict(black_box(&image), &params, refiner).unwrap()))
            });
        }
    }
    g.finish();
}

fn eval_batch(c: &mut Criterion) {
    let params = ModelParams::default_init(0).unwrap();
    let val = samples(8);
    let mut g = c.benchmark_group("evaluate_8x128");
    g.sample_size(10);
    for (label, threads) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(&label), &threads, |b, &t| {
            with_threads(t, || b.iter(|| evaluate(&params, black_box(&val), &[Refiner::Feathering]).unwrap()))
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let train = samples(8);
    let cfg = TrainConfig {
        iter_scale: 1.0,
        stage1_iters: [1, 0],
        stage2_iters: [0, 0],
        stage3_iters: 1,
        augment: AugmentConfig::none(),
        ..TrainConfig::desk()
    };
    let init = ModelParams::init(&cfg.ldn, cfg.feather_hidden, 0).unwrap();
    let mut g = c.benchmark_group("train_batch8_128");
    g.sample_size(10);
    for (label, threads) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(&label), &threads, |b, &t| {
            with_threads(t, || b.iter(|| train_from(init.clone(), black_box(&train), &[], &cfg, &mut |_| {}).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, forward, eval_batch, train_step);
criterion_main!(benches);
