//! Parallel helpers on the default rayon pool against a one-thread pool and
//! the plain sequential map.

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use std::hint::black_box;
use tabcurate_core::curation::{cross_val_predict, GbtConfig};
use tabcurate_core::par;
use tabcurate_core::pfn::{embed_all, embed_dataset, PfnConfig, PfnModel};
use tabcurate_core::procgen::{generate_batch, PriorConfig};
use tabcurate_core::tabular::Dataset;

fn one_thread() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn embeddings(c: &mut Criterion) {
    let cfg = PfnConfig { d_model: 32, heads: 2, max_features: 16, ..PfnConfig::default() };
    let model = PfnModel::init(&cfg).unwrap();
    let prior = PriorConfig { feature_count_range: [2, 16], ..PriorConfig::default() };
    let tasks = generate_batch(&prior, 8, 1).unwrap();
    let data: Vec<&Dataset> = tasks.iter().map(|t| &t.dataset).collect();
    let pool = one_thread();

    let mut g = c.benchmark_group("embed_all");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| embed_all(&model, black_box(&data)).unwrap()));
    g.bench_function("one_thread", |b| b.iter(|| pool.install(|| embed_all(&model, black_box(&data)).unwrap())));
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_range_seq(data.len(), |i| embed_dataset(&model, black_box(data[i])).unwrap()))
    });
    g.finish();
}

fn folds(c: &mut Criterion) {
    let x = Array2::from_shape_fn((300, 16), |(i, j)| ((i * 31 + j * 17) % 23) as f64 / 23.0 + (i % 2) as f64 * 0.1);
    let labels: Vec<usize> = (0..300).map(|i| i % 2).collect();
    let cfg = GbtConfig { n_estimators: 50, ..GbtConfig::default() };
    let pool = one_thread();

    let mut g = c.benchmark_group("cross_val_predict");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| cross_val_predict(black_box(&x), &labels, 5, &cfg, 0).unwrap()));
    g.bench_function("one_thread", |b| {
        b.iter(|| pool.install(|| cross_val_predict(black_box(&x), &labels, 5, &cfg, 0).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, embeddings, folds);
criterion_main!(benches);
