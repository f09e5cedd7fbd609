//! Block-partitioned vectors and self-adjoint block operators.
//!
//! A self-adjoint operator `H` on `U = U_1 x ... x U_s` splits as
//! `H = H_d + H_u + H_u^*`, where `H_d` holds the diagonal blocks and `H_u`
//! the strictly upper blocks. From this splitting we build the symmetric
//! Gauss-Seidel operator `sGS(H) = H_u H_d^{-1} H_u^*` and the factored
//! operator `H_hat = (H_d + H_u) H_d^{-1} (H_d + H_u^*) = H + sGS(H)`.

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, DVectorView, Dyn, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// Relative tolerance used for symmetry and semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-12;

/// Block dimensions of a product space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Structural("block partition must have at least one block".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Structural(format!("block {i} has zero dimension")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// A partition with a single block of dimension `n`.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }
}

/// An element of a product space, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector<T: Real> {
    partition: Arc<BlockPartition>,
    data: DVector<T>,
}

impl<T: Real> BlockVector<T> {
    pub fn zeros(partition: &Arc<BlockPartition>) -> Self {
        Self {
            partition: Arc::clone(partition),
            data: DVector::zeros(partition.total()),
        }
    }

    pub fn from_data(partition: &Arc<BlockPartition>, data: DVector<T>) -> Result<Self> {
        check_dim("block vector data", partition.total(), data.len())?;
        Ok(Self {
            partition: Arc::clone(partition),
            data,
        })
    }

    pub fn from_blocks(partition: &Arc<BlockPartition>, blocks: &[DVector<T>]) -> Result<Self> {
        check_dim("block count", partition.num_blocks(), blocks.len())?;
        let mut v = Self::zeros(partition);
        for (i, b) in blocks.iter().enumerate() {
            check_dim("block length", partition.size(i), b.len())?;
            v.set_block(i, b);
        }
        Ok(v)
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn data(&self) -> &DVector<T> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DVector<T> {
        &mut self.data
    }

    pub fn into_data(self) -> DVector<T> {
        self.data
    }

    pub fn block(&self, i: usize) -> DVectorView<'_, T> {
        let r = self.partition.range(i);
        self.data.rows(r.start, r.len())
    }

    pub fn block_owned(&self, i: usize) -> DVector<T> {
        self.block(i).into_owned()
    }

    pub fn set_block(&mut self, i: usize, v: &DVector<T>) {
        let r = self.partition.range(i);
        self.data.rows_mut(r.start, r.len()).copy_from(v);
    }

    pub fn zero_block(&mut self, i: usize) {
        let r = self.partition.range(i);
        self.data.rows_mut(r.start, r.len()).fill(T::zero());
    }

    /// A vector that is zero except for block `i`.
    pub fn embed(partition: &Arc<BlockPartition>, i: usize, v: &DVector<T>) -> Self {
        let mut out = Self::zeros(partition);
        out.set_block(i, v);
        out
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data.dot(&other.data)
    }

    pub fn norm(&self) -> T {
        self.data.norm()
    }

    pub fn map_data(&self, f: impl FnOnce(&DVector<T>) -> DVector<T>) -> Self {
        Self {
            partition: Arc::clone(&self.partition),
            data: f(&self.data),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.map_data(|d| d - &other.data)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.map_data(|d| d + &other.data)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map_data(|d| d * s)
    }
}

/// Matrix-free access to a block-partitioned linear map.
pub trait BlockMap<T: Real> {
    fn partition(&self) -> &Arc<BlockPartition>;

    /// `H_ij x_j`.
    fn apply_block(&self, i: usize, j: usize, x: DVectorView<'_, T>) -> DVector<T>;

    /// `(H u)_i`.
    fn apply_row(&self, i: usize, u: &BlockVector<T>) -> DVector<T> {
        let p = self.partition();
        let mut acc = DVector::zeros(p.size(i));
        for j in 0..p.num_blocks() {
            acc += self.apply_block(i, j, u.block(j));
        }
        acc
    }

    fn apply(&self, u: &BlockVector<T>) -> BlockVector<T> {
        let p = Arc::clone(self.partition());
        let mut out = BlockVector::zeros(&p);
        for i in 0..p.num_blocks() {
            out.set_block(i, &self.apply_row(i, u));
        }
        out
    }
}

/// Dense self-adjoint (or general square) operator with block structure.
///
/// Diagonal-block Cholesky factors are computed on first use and cached.
#[derive(Debug)]
pub struct BlockOperator<T: Real> {
    matrix: DMatrix<T>,
    partition: Arc<BlockPartition>,
    symmetric: bool,
    factors: Vec<OnceLock<Option<Cholesky<T, Dyn>>>>,
}

impl<T: Real> Clone for BlockOperator<T> {
    fn clone(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            partition: Arc::clone(&self.partition),
            symmetric: self.symmetric,
            factors: (0..self.partition.num_blocks()).map(|_| OnceLock::new()).collect(),
        }
    }
}

fn symmetry_defect<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

impl<T: Real> BlockOperator<T> {
    /// Wraps a square matrix. The symmetry flag is detected to `PSD_TOL`
    /// relative to the largest entry.
    pub fn new(matrix: DMatrix<T>, partition: &Arc<BlockPartition>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Structural(format!(
                "block operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_dim("block operator order", partition.total(), matrix.nrows())?;
        let scale = matrix.amax().max(T::one());
        let symmetric = symmetry_defect(&matrix) <= T::lit(PSD_TOL) * scale;
        Ok(Self {
            factors: (0..partition.num_blocks()).map(|_| OnceLock::new()).collect(),
            matrix,
            partition: Arc::clone(partition),
            symmetric,
        })
    }

    /// Like [`BlockOperator::new`] but rejects non-symmetric input.
    pub fn new_symmetric(matrix: DMatrix<T>, partition: &Arc<BlockPartition>) -> Result<Self> {
        let op = Self::new(matrix, partition)?;
        if !op.symmetric {
            return Err(Error::Structural("operator is not self-adjoint".into()));
        }
        Ok(op)
    }

    /// Like [`BlockOperator::new_symmetric`] and additionally verifies
    /// `<u, H u> >= -PSD_TOL * scale * |u|^2` via the smallest eigenvalue.
    pub fn new_psd(matrix: DMatrix<T>, partition: &Arc<BlockPartition>) -> Result<Self> {
        let op = Self::new_symmetric(matrix, partition)?;
        let lmin = op.min_eigenvalue();
        let scale = op.matrix.amax().max(T::one());
        if lmin < -T::lit(PSD_TOL) * scale {
            return Err(Error::Indefinite {
                context: "declared PSD block operator",
                value: lmin.to_f64_lossy(),
            });
        }
        Ok(op)
    }

    pub fn identity(partition: &Arc<BlockPartition>) -> Self {
        Self::new(DMatrix::identity(partition.total(), partition.total()), partition).unwrap()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn num_blocks(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, T> {
        let ri = self.partition.range(i);
        let rj = self.partition.range(j);
        self.matrix.view((ri.start, rj.start), (ri.len(), rj.len()))
    }

    pub fn min_eigenvalue(&self) -> T {
        let sym = (&self.matrix + self.matrix.transpose()) * T::lit(0.5);
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    fn factor(&self, i: usize) -> Result<&Cholesky<T, Dyn>> {
        self.factors[i]
            .get_or_init(|| Cholesky::new(self.block(i, i).into_owned()))
            .as_ref()
            .ok_or(Error::SingularBlock { block: i })
    }

    /// Verifies that every diagonal block admits a Cholesky factorization.
    pub fn check_diagonal_definite(&self) -> Result<()> {
        for i in 0..self.num_blocks() {
            self.factor(i)?;
        }
        Ok(())
    }

    /// `H_ii^{-1} rhs`.
    pub fn diag_solve(&self, i: usize, rhs: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.factor(i)?.solve(rhs))
    }

    /// `H_d^{-1} v`.
    pub fn diag_inv_apply(&self, v: &BlockVector<T>) -> Result<BlockVector<T>> {
        let mut out = BlockVector::zeros(&self.partition);
        for i in 0..self.num_blocks() {
            out.set_block(i, &self.diag_solve(i, &v.block_owned(i))?);
        }
        Ok(out)
    }

    /// `H_d v`.
    pub fn diag_apply(&self, v: &BlockVector<T>) -> BlockVector<T> {
        let mut out = BlockVector::zeros(&self.partition);
        for i in 0..self.num_blocks() {
            out.set_block(i, &(self.block(i, i) * v.block(i)));
        }
        out
    }

    /// `H_u v` (strictly upper blocks).
    pub fn upper_apply(&self, v: &BlockVector<T>) -> BlockVector<T> {
        let s = self.num_blocks();
        let mut out = BlockVector::zeros(&self.partition);
        for i in 0..s {
            let mut acc = DVector::zeros(self.partition.size(i));
            for j in (i + 1)..s {
                acc += self.block(i, j) * v.block(j);
            }
            out.set_block(i, &acc);
        }
        out
    }

    /// `H_u^* v`.
    pub fn upper_adjoint_apply(&self, v: &BlockVector<T>) -> BlockVector<T> {
        let s = self.num_blocks();
        let mut out = BlockVector::zeros(&self.partition);
        for i in 0..s {
            let mut acc = DVector::zeros(self.partition.size(i));
            for j in 0..i {
                acc += self.block(j, i).transpose() * v.block(j);
            }
            out.set_block(i, &acc);
        }
        out
    }

    /// `(H_d + H_u)^{-1} v` by block back substitution.
    pub fn upper_solve(&self, v: &BlockVector<T>) -> Result<BlockVector<T>> {
        let s = self.num_blocks();
        let mut out = BlockVector::zeros(&self.partition);
        for i in (0..s).rev() {
            let mut rhs = v.block_owned(i);
            for j in (i + 1)..s {
                rhs -= self.block(i, j) * out.block(j);
            }
            out.set_block(i, &self.diag_solve(i, &rhs)?);
        }
        Ok(out)
    }

    /// `(H_d + H_u^*)^{-1} v` by block forward substitution.
    pub fn lower_solve(&self, v: &BlockVector<T>) -> Result<BlockVector<T>> {
        let s = self.num_blocks();
        let mut out = BlockVector::zeros(&self.partition);
        for i in 0..s {
            let mut rhs = v.block_owned(i);
            for j in 0..i {
                rhs -= self.block(j, i).transpose() * out.block(j);
            }
            out.set_block(i, &self.diag_solve(i, &rhs)?);
        }
        Ok(out)
    }

    /// `<v, H_d v>`.
    pub fn diag_quadratic(&self, v: &BlockVector<T>) -> T {
        v.dot(&self.diag_apply(v))
    }

    /// `<v, H_d^{-1} v>`.
    pub fn diag_inv_quadratic(&self, v: &BlockVector<T>) -> Result<T> {
        Ok(v.dot(&self.diag_inv_apply(v)?))
    }

    /// `||H_hat^{-1/2} v||` using the factored form of `H_hat`.
    pub fn hat_inv_sqrt_norm(&self, v: &BlockVector<T>) -> Result<T> {
        let w = self.upper_solve(v)?;
        Ok(self.diag_quadratic(&w).max(T::zero()).sqrt())
    }
}

impl<T: Real> BlockMap<T> for BlockOperator<T> {
    fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    fn apply_block(&self, i: usize, j: usize, x: DVectorView<'_, T>) -> DVector<T> {
        self.block(i, j) * x
    }

    fn apply(&self, u: &BlockVector<T>) -> BlockVector<T> {
        BlockVector {
            partition: Arc::clone(&self.partition),
            data: &self.matrix * &u.data,
        }
    }
}

fn require_symmetric<T: Real>(h: &BlockOperator<T>) -> Result<()> {
    if h.is_symmetric() {
        Ok(())
    } else {
        Err(Error::Structural("operator is not self-adjoint".into()))
    }
}

fn check_vector<T: Real>(h: &BlockOperator<T>, v: &BlockVector<T>) -> Result<()> {
    if v.partition().as_ref() != h.partition().as_ref() {
        return Err(Error::Structural("vector partition differs from operator partition".into()));
    }
    Ok(())
}

/// Splits a self-adjoint `H` into its block diagonal `H_d` and strictly
/// upper part `H_u`, so that `H = H_d + H_u + H_u^*`.
pub fn split_blocks<T: Real>(h: &BlockOperator<T>) -> Result<(BlockOperator<T>, BlockOperator<T>)> {
    require_symmetric(h)?;
    let p = h.partition();
    let n = p.total();
    let mut hd = DMatrix::zeros(n, n);
    let mut hu = DMatrix::zeros(n, n);
    for i in 0..p.num_blocks() {
        let ri = p.range(i);
        for j in i..p.num_blocks() {
            let rj = p.range(j);
            let target = if i == j { &mut hd } else { &mut hu };
            target
                .view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                .copy_from(&h.block(i, j));
        }
    }
    Ok((BlockOperator::new(hd, p)?, BlockOperator::new(hu, p)?))
}

/// `sGS(H) v = H_u H_d^{-1} H_u^* v`.
pub fn sgs_operator_apply<T: Real>(h: &BlockOperator<T>, v: &BlockVector<T>) -> Result<BlockVector<T>> {
    require_symmetric(h)?;
    check_vector(h, v)?;
    let w = h.diag_inv_apply(&h.upper_adjoint_apply(v))?;
    Ok(h.upper_apply(&w))
}

/// `H_hat v = (H_d + H_u) H_d^{-1} (H_d + H_u^*) v`.
pub fn hat_operator_apply<T: Real>(h: &BlockOperator<T>, v: &BlockVector<T>) -> Result<BlockVector<T>> {
    require_symmetric(h)?;
    check_vector(h, v)?;
    let t = h.diag_apply(v).add(&h.upper_adjoint_apply(v));
    let w = h.diag_inv_apply(&t)?;
    Ok(h.diag_apply(&w).add(&h.upper_apply(&w)))
}

/// Dense matrix of `sGS(H)`.
pub fn sgs_matrix<T: Real>(h: &BlockOperator<T>) -> Result<DMatrix<T>> {
    dense_of(h, sgs_operator_apply)
}

/// Dense matrix of `H_hat` in its factored form.
pub fn hat_matrix<T: Real>(h: &BlockOperator<T>) -> Result<DMatrix<T>> {
    dense_of(h, hat_operator_apply)
}

fn dense_of<T: Real>(
    h: &BlockOperator<T>,
    f: fn(&BlockOperator<T>, &BlockVector<T>) -> Result<BlockVector<T>>,
) -> Result<DMatrix<T>> {
    let p = h.partition();
    let n = p.total();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = BlockVector::zeros(p);
        e.data_mut()[k] = T::one();
        out.set_column(k, f(h, &e)?.data());
    }
    Ok(out)
}

/// `||v||_H = sqrt(<v, H v>)`. Round-off negatives down to
/// `-PSD_TOL * ||H||_max * ||v||^2` are clamped to zero.
pub fn weighted_norm<T: Real>(v: &BlockVector<T>, h: &BlockOperator<T>) -> Result<T> {
    check_vector(h, v)?;
    let q = v.dot(&h.apply(v));
    let tol = T::lit(PSD_TOL) * h.matrix().amax().max(T::one()) * v.dot(v);
    if q < -tol {
        return Err(Error::Indefinite {
            context: "weighted norm",
            value: q.to_f64_lossy(),
        });
    }
    Ok(q.max(T::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_block_psd, rng};
    use approx::assert_relative_eq;

    fn two_by_two() -> BlockOperator<f64> {
        let p = Arc::new(BlockPartition::new(vec![1, 1]).unwrap());
        BlockOperator::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), &p).unwrap()
    }

    #[test]
    fn partition_rejects_empty_and_zero_blocks() {
        assert!(BlockPartition::new(vec![]).is_err());
        assert!(BlockPartition::new(vec![2, 0]).is_err());
        let p = BlockPartition::new(vec![2, 3, 1]).unwrap();
        assert_eq!(p.total(), 6);
        assert_eq!(p.range(1), 2..5);
    }

    #[test]
    fn split_two_by_two() {
        let h = two_by_two();
        let (hd, hu) = split_blocks(&h).unwrap();
        assert_eq!(hd.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
        assert_eq!(hu.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert!(!hu.is_symmetric());
    }

    #[test]
    fn split_block_diagonal_has_zero_upper() {
        let p = Arc::new(BlockPartition::new(vec![2, 1]).unwrap());
        let m = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let (_, hu) = split_blocks(&BlockOperator::new(m, &p).unwrap()).unwrap();
        assert_eq!(hu.matrix().amax(), 0.0);
    }

    #[test]
    fn split_reassembles_random() {
        let mut r = rng(11);
        let h = random_block_psd(&mut r, &[3, 2, 4]);
        let (hd, hu) = split_blocks(&h).unwrap();
        let re = hd.matrix() + hu.matrix() + hu.matrix().transpose();
        assert!((re - h.matrix()).amax() <= 1e-14);
    }

    #[test]
    fn split_rejects_nonsymmetric_and_mismatched() {
        let p = Arc::new(BlockPartition::new(vec![1, 1]).unwrap());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(split_blocks(&BlockOperator::new(m, &p).unwrap()).is_err());
        let p3 = Arc::new(BlockPartition::new(vec![1, 2]).unwrap());
        assert!(BlockOperator::new(DMatrix::<f64>::identity(2, 2), &p3).is_err());
        assert!(BlockOperator::new(DMatrix::<f64>::zeros(2, 3), &p).is_err());
    }

    #[test]
    fn sgs_two_by_two() {
        let h = two_by_two();
        let v = BlockVector::from_data(h.partition(), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let out = sgs_operator_apply(&h, &v).unwrap();
        assert_relative_eq!(out.data()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(out.data()[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sgs_block_diagonal_is_zero() {
        let p = Arc::new(BlockPartition::new(vec![1, 2]).unwrap());
        let h = BlockOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])), &p).unwrap();
        let v = BlockVector::from_data(&p, DVector::from_vec(vec![1.0, -2.0, 4.0])).unwrap();
        assert_eq!(sgs_operator_apply(&h, &v).unwrap().norm(), 0.0);
        let hat = hat_matrix(&h).unwrap();
        assert!((hat - h.matrix()).amax() < 1e-15);
    }

    #[test]
    fn sgs_matches_dense_product() {
        let mut r = rng(5);
        let h = random_block_psd(&mut r, &[2, 3, 2]);
        let (hd, hu) = split_blocks(&h).unwrap();
        let dense = hu.matrix() * hd.matrix().clone().try_inverse().unwrap() * hu.matrix().transpose();
        let v = crate::random::random_block_vector(&mut r, h.partition());
        let got = sgs_operator_apply(&h, &v).unwrap();
        let want = &dense * v.data();
        assert!((got.data() - &want).norm() <= 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn hat_two_by_two() {
        let hat = hat_matrix(&two_by_two()).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.5, 1.0, 1.0, 2.0]);
        assert!((hat - want).amax() < 1e-15);
    }

    #[test]
    fn hat_factored_equals_additive() {
        let mut r = rng(9);
        let h = random_block_psd(&mut r, &[2, 1, 3, 2]);
        let additive = h.matrix() + sgs_matrix(&h).unwrap();
        for _ in 0..10 {
            let v = crate::random::random_block_vector(&mut r, h.partition());
            let got = hat_operator_apply(&h, &v).unwrap();
            let want = &additive * v.data();
            assert!((got.data() - &want).norm() <= 1e-12 * want.norm().max(1.0));
        }
    }

    #[test]
    fn singular_block_is_reported_by_index() {
        let p = Arc::new(BlockPartition::new(vec![1, 1, 1]).unwrap());
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let h = BlockOperator::new(m, &p).unwrap();
        let v = BlockVector::zeros(&p);
        match sgs_operator_apply(&h, &v) {
            Err(Error::SingularBlock { block }) => assert_eq!(block, 1),
            other => panic!("expected singular block error, got {other:?}"),
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let p = Arc::new(BlockPartition::new(vec![2]).unwrap());
        let h = BlockOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])), &p).unwrap();
        let v = BlockVector::from_data(&p, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_relative_eq!(weighted_norm(&v, &h).unwrap(), 13f64.sqrt(), epsilon = 1e-15);
        assert_eq!(weighted_norm(&BlockVector::zeros(&p), &h).unwrap(), 0.0);
        let id = BlockOperator::identity(&p);
        let w = BlockVector::from_data(&p, DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_relative_eq!(weighted_norm(&w, &id).unwrap(), 5.0, epsilon = 1e-15);
        let ind = BlockOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])), &p).unwrap();
        let e2 = BlockVector::from_data(&p, DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!(matches!(weighted_norm(&e2, &ind), Err(Error::Indefinite { .. })));
    }

    #[test]
    fn psd_constructor_rejects_indefinite() {
        let p = Arc::new(BlockPartition::new(vec![2]).unwrap());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(BlockOperator::new_psd(m, &p).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let p = Arc::new(BlockPartition::new(vec![1, 1]).unwrap());
        let h = BlockOperator::new(DMatrix::from_row_slice(2, 2, &[2.0f32, 1.0, 1.0, 2.0]), &p).unwrap();
        let hat = hat_matrix(&h).unwrap();
        assert!((hat[(0, 0)] - 2.5).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]
            #[test]
            fn sgs_and_hat_are_self_adjoint_psd(seed in 0u64..10_000, s in 2usize..5) {
                let mut r = rng(seed);
                let sizes: Vec<usize> = (0..s).map(|i| 1 + (seed as usize + i) % 3).collect();
                let h = random_block_psd(&mut r, &sizes);
                let sgs = sgs_matrix(&h).unwrap();
                let hat = hat_matrix(&h).unwrap();
                let u = crate::random::random_block_vector(&mut r, h.partition());
                let v = crate::random::random_block_vector(&mut r, h.partition());
                for op in [&sgs, &hat] {
                    let lhs = (op * u.data()).dot(v.data());
                    let rhs = u.data().dot(&(op * v.data()));
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * u.norm() * v.norm() * op.amax().max(1.0));
                }
                prop_assert!(v.data().dot(&(&sgs * v.data())) >= -1e-12 * v.data().norm_squared());
                // Rayleigh quotients of H_hat are strictly positive.
                let mut min_rq = f64::INFINITY;
                for _ in 0..100 {
                    let w = crate::random::random_block_vector(&mut r, h.partition());
                    min_rq = min_rq.min(w.data().dot(&(&hat * w.data())) / w.data().norm_squared());
                }
                prop_assert!(min_rq > 0.0);
            }
        }
    }
}
