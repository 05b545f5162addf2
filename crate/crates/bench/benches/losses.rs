use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use procsim_bench::{cyclic_labels, unit_rows};
use procsim_core::losses::{
    ms_loss_grad_similarity, ms_loss_per_sample, proxy_nca_per_sample,
    semantic_regularizer_per_sample, LossConfig, SemanticMatrixSet, SemanticTable,
    SimilarityMatrix,
};

fn bench_ms(c: &mut Criterion) {
    let cfg = LossConfig::default();
    let embeddings = unit_rows(32, 64, 3);
    let labels = cyclic_labels(32, 8);
    let sim = SimilarityMatrix::from_embeddings(&embeddings).unwrap();
    let weights = vec![1.0 / 32.0; 32];
    c.bench_function("ms_loss n=32 d=64", |b| {
        b.iter(|| ms_loss_per_sample(black_box(&sim), &labels, &cfg).unwrap())
    });
    c.bench_function("ms_grad n=32 d=64", |b| {
        b.iter(|| ms_loss_grad_similarity(black_box(&sim), &labels, &cfg, &weights).unwrap())
    });
}

fn bench_proxy(c: &mut Criterion) {
    let cfg = LossConfig::default();
    let embeddings = unit_rows(32, 64, 4);
    let proxies = unit_rows(20, 64, 5);
    let labels = cyclic_labels(32, 20);
    let weights = vec![1.0 / 32.0; 32];
    c.bench_function("proxy_nca n=32 C=20 d=64", |b| {
        b.iter(|| {
            proxy_nca_per_sample(
                black_box(&embeddings),
                &labels,
                &proxies,
                cfg.proxy_scale,
                true,
                &weights,
            )
            .unwrap()
        })
    });
}

fn bench_regularizer(c: &mut Criterion) {
    let embeddings = unit_rows(32, 64, 6);
    let sim = SimilarityMatrix::from_embeddings(&embeddings).unwrap();
    let table = SemanticTable::new(unit_rows(20, 32, 7)).unwrap();
    let topk: Vec<Vec<usize>> = (0..32).map(|i| vec![i % 20, (i + 1) % 20]).collect();
    let sem = SemanticMatrixSet::from_topk(&table, &topk).unwrap();
    c.bench_function("semantic_regularizer n=32 k=2", |b| {
        b.iter(|| semantic_regularizer_per_sample(black_box(&sim), &sem, 1.0).unwrap())
    });
}

criterion_group!(benches, bench_ms, bench_proxy, bench_regularizer);
criterion_main!(benches);
