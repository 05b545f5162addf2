//! Seeded input generators shared by the benchmarks.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Bimodal loss values resembling proxy losses under label noise.
pub fn bimodal_losses(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let low = Normal::new(0.5, 0.2).unwrap();
    let high = Normal::new(6.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                low.sample(&mut rng)
            } else {
                high.sample(&mut rng)
            }
        })
        .collect()
}

/// Random matrix with unit-norm rows.
pub fn unit_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut m = Array2::<f64>::zeros((n, d));
    for mut row in m.rows_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    m
}

/// Round-robin labels over `classes`.
pub fn cyclic_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}
