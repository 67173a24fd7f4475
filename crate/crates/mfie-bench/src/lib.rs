//! Shared input builders for the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfie_core::matching::{CostMatrix, LabelTensor};
use mfie_core::tensor::Matrix;

pub fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xBE7C)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_cost(size: usize, rng: &mut ChaCha8Rng) -> CostMatrix {
    CostMatrix::from_fn(size, |_, _| rng.random_range(-10.0..10.0))
}

pub fn random_pair(
    m: usize,
    l: usize,
    r: usize,
    rng: &mut ChaCha8Rng,
) -> (LabelTensor, LabelTensor) {
    let mut pred = LabelTensor::zeros(m, l, r);
    for v in pred.data_mut() {
        *v = rng.random_range(0.01..0.99);
    }
    let mut gold = LabelTensor::zeros(m, l, r);
    for v in gold.data_mut() {
        *v = if rng.random_bool(0.1) { 1.0 } else { 0.0 };
    }
    (pred, gold)
}
