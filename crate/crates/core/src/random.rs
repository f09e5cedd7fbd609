//! Seeded random instances for tests, benchmarks and the instance generator.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blockops::{BlockOperator, BlockPartition, BlockVector};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn random_vector<R: Rng>(r: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

/// Symmetric matrix with entries in `[-1, 1]`.
pub fn random_symmetric<R: Rng>(r: &mut R, n: usize) -> DMatrix<f64> {
    let a = random_matrix(r, n, n);
    (&a + a.transpose()) * 0.5
}

/// `G G^T + shift I` for a Gaussian-like `G` with `cols` columns.
pub fn random_psd<R: Rng>(r: &mut R, n: usize, cols: usize, shift: f64) -> DMatrix<f64> {
    let g = random_matrix(r, n, cols);
    &g * g.transpose() + DMatrix::identity(n, n) * shift
}

/// Random symmetric positive definite block operator with the given block sizes.
pub fn random_block_psd<R: Rng>(r: &mut R, sizes: &[usize]) -> BlockOperator<f64> {
    let p = Arc::new(BlockPartition::new(sizes.to_vec()).expect("valid sizes"));
    let n = p.total();
    let m = random_psd(r, n, n, 0.1);
    BlockOperator::new_symmetric(m, &p).expect("symmetric by construction")
}

pub fn random_block_vector<R: Rng>(r: &mut R, p: &Arc<BlockPartition>) -> BlockVector<f64> {
    BlockVector::from_data(p, random_vector(r, p.total())).expect("length matches")
}
