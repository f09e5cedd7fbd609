//! Isometric vectorization of symmetric matrices.
//!
//! The upper triangle is stored column by column; off-diagonal entries are
//! scaled by `sqrt(2)` so that `<svec(A), svec(B)> = trace(A B)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// Length of `svec` for an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(i, j)` (either order) in `svec`.
pub fn svec_index(i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    c * (c + 1) / 2 + r
}

/// Inverse of [`svec_index`].
pub fn svec_position(k: usize) -> (usize, usize) {
    let mut c = 0;
    while (c + 1) * (c + 2) / 2 <= k {
        c += 1;
    }
    (k - c * (c + 1) / 2, c)
}

/// Recovers `n` from `svec_len(n)`.
pub fn order_from_len(len: usize) -> Result<usize> {
    let mut n = 0;
    while svec_len(n) < len {
        n += 1;
    }
    if svec_len(n) == len {
        Ok(n)
    } else {
        Err(Error::Structural(format!("{len} is not a triangular number")))
    }
}

pub fn svec<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let n = m.nrows();
    let r2 = T::lit(std::f64::consts::SQRT_2);
    let half = T::lit(0.5);
    let mut v = DVector::zeros(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            let val = if i == j {
                m[(i, i)]
            } else {
                (m[(i, j)] + m[(j, i)]) * half * r2
            };
            v[svec_index(i, j)] = val;
        }
    }
    v
}

pub fn smat<T: Real>(v: &DVector<T>, n: usize) -> Result<DMatrix<T>> {
    check_dim("svec length", svec_len(n), v.len())?;
    let ir2 = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let val = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = val;
            } else {
                m[(i, j)] = val * ir2;
                m[(j, i)] = val * ir2;
            }
        }
    }
    Ok(m)
}

/// Symmetrizes `m` as `(m + m^T) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}
