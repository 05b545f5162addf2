use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use procsim_bench::{bimodal_losses, cyclic_labels, unit_rows};
use procsim_core::eval::{noisy_identification, recall_at_k};
use procsim_core::numerics::LossVector;

fn bench_recall(c: &mut Criterion) {
    let gallery = unit_rows(500, 64, 8);
    let labels = cyclic_labels(500, 20);
    c.bench_function("recall_at_k 500x500 d=64", |b| {
        b.iter(|| {
            recall_at_k(
                black_box(&gallery),
                &labels,
                &gallery,
                &labels,
                &[1, 2, 4, 8],
                true,
            )
            .unwrap()
        })
    });
}

fn bench_identification(c: &mut Criterion) {
    let losses = LossVector::new(bimodal_losses(1000, 9)).unwrap();
    let flags: Vec<bool> = (0..1000).map(|i| i % 2 == 1).collect();
    c.bench_function("noisy_identification n=1000", |b| {
        b.iter(|| noisy_identification(black_box(&losses), &flags).unwrap())
    });
}

criterion_group!(benches, bench_recall, bench_identification);
criterion_main!(benches);
