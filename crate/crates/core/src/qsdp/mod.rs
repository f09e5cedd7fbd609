//! Convex quadratic SDP
//!
//! ```text
//! min 1/2 <X, Q X> + <C, X>  s.t.  A_E X = b_E,  A_I X >= b_I,  X psd,  X in N
//! ```
//!
//! solved through its dual with the sGS-based ADMM. Symmetric matrices are
//! exchanged with the linear maps in `svec` coordinates.

mod biq;
mod dual;
mod qop;
mod residual;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

pub use biq::{generate_biq, random_biq, random_q_spec, BiqVariant};
pub use dual::{DualIterate, Formulation, QsdpDual, WSolver};
pub use qop::{apply_q, apply_q_svec, q_matrix, QOperatorSpec};
pub use residual::{kkt_residuals, ResidualReport};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;
use crate::subsolve::power_iteration;
use crate::svec::{smat, svec, svec_len};

/// Sparse linear map `S^n -> R^m` stored as rows over `svec` coordinates.
#[derive(Debug, Clone)]
pub struct ConstraintMap<T: Real> {
    rows: CsrMatrix<T>,
}

impl<T: Real> ConstraintMap<T> {
    /// From `(row, svec column, value)` triplets; duplicates are summed.
    pub fn from_triplets(m: usize, n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let nv = svec_len(n);
        let mut coo = CooMatrix::new(m, nv);
        for &(r, c, v) in triplets {
            if r >= m || c >= nv {
                return Err(Error::Format(format!(
                    "constraint entry ({r}, {c}) outside {m} x {nv}"
                )));
            }
            coo.push(r, c, v);
        }
        Ok(Self {
            rows: CsrMatrix::from(&coo),
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            rows: CsrMatrix::zeros(0, svec_len(n)),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn csr(&self) -> &CsrMatrix<T> {
        &self.rows
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        self.rows.triplet_iter().map(|(r, c, v)| (r, c, *v)).collect()
    }

    /// `A x` on `svec` coordinates.
    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.nrows());
        for (i, row) in self.rows.row_iter().enumerate() {
            let mut acc = T::zero();
            for (c, v) in row.col_indices().iter().zip(row.values()) {
                acc += *v * x[*c];
            }
            out[i] = acc;
        }
        out
    }

    /// `A^* y` on `svec` coordinates.
    pub fn adjoint(&self, y: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.ncols());
        for (i, row) in self.rows.row_iter().enumerate() {
            let yi = y[i];
            if yi == T::zero() {
                continue;
            }
            for (c, v) in row.col_indices().iter().zip(row.values()) {
                out[*c] += *v * yi;
            }
        }
        out
    }

    /// `A X` for a symmetric matrix.
    pub fn apply_matrix(&self, x: &DMatrix<T>) -> DVector<T> {
        self.apply(&svec(x))
    }

    pub fn dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, v) in self.rows.triplet_iter() {
            d[(r, c)] += *v;
        }
        d
    }

    /// `A A^*` as a dense matrix.
    pub fn gram(&self) -> DMatrix<T> {
        let d = self.dense();
        &d * d.transpose()
    }

    /// `||A||` (spectral norm) by power iteration on `A A^*`.
    pub fn norm(&self) -> T {
        let m = self.nrows();
        let l = power_iteration(|v| self.apply(&self.adjoint(v)), m, T::lit(1e-10), 10_000);
        l.max(T::zero()).sqrt()
    }
}

/// Polyhedral set `N = {X : L <= X <= U}` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet<T: Real> {
    pub lower: DMatrix<T>,
    pub upper: DMatrix<T>,
}

impl<T: Real> BoxSet<T> {
    pub fn nonneg(n: usize) -> Self {
        Self {
            lower: DMatrix::zeros(n, n),
            upper: DMatrix::from_element(n, n, T::infinity()),
        }
    }

    pub fn project(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        crate::prox::project_box(x, &self.lower, &self.upper)
    }

    /// Bounds of `N` in `svec` coordinates.
    pub fn svec_bounds(&self) -> (DVector<T>, DVector<T>) {
        (svec(&self.lower), svec(&self.upper))
    }
}

/// Data of a convex QSDP.
#[derive(Debug, Clone)]
pub struct QsdpProblem<T: Real> {
    pub n: usize,
    pub q: QOperatorSpec<T>,
    pub c: DMatrix<T>,
    pub a_e: ConstraintMap<T>,
    pub b_e: DVector<T>,
    pub a_i: ConstraintMap<T>,
    pub b_i: DVector<T>,
    pub set: BoxSet<T>,
    q_norm: T,
}

impl<T: Real> QsdpProblem<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        q: QOperatorSpec<T>,
        c: DMatrix<T>,
        a_e: ConstraintMap<T>,
        b_e: DVector<T>,
        a_i: ConstraintMap<T>,
        b_i: DVector<T>,
        set: BoxSet<T>,
    ) -> Result<Self> {
        let nv = svec_len(n);
        check_dim("C rows", n, c.nrows())?;
        check_dim("C cols", n, c.ncols())?;
        check_dim("A_E columns", nv, a_e.ncols())?;
        check_dim("A_I columns", nv, a_i.ncols())?;
        check_dim("b_E length", a_e.nrows(), b_e.len())?;
        check_dim("b_I length", a_i.nrows(), b_i.len())?;
        check_dim("box order", n, set.lower.nrows())?;
        check_dim("box order", n, set.upper.nrows())?;
        q.validate(n)?;
        let asym = (&c - c.transpose()).amax();
        if asym > T::lit(1e-12) * c.amax().max(T::one()) {
            return Err(Error::Structural("C is not symmetric".into()));
        }
        if set.lower.iter().zip(set.upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::InvalidSpec("box requires L <= U".into()));
        }
        for j in 0..n {
            for i in 0..=j {
                if !set.lower[(i, j)].is_finite() && !set.upper[(i, j)].is_finite() {
                    return Err(Error::InvalidSpec(format!("entry ({i}, {j}) of N is unbounded on both sides")));
                }
            }
        }
        let q_norm = match &q {
            QOperatorSpec::Vacuous => T::zero(),
            _ => power_iteration(|v| apply_q_svec(&q, v, n), nv, T::lit(1e-12), 100_000),
        };
        Ok(Self {
            n,
            q_norm,
            q,
            c,
            a_e,
            b_e,
            a_i,
            b_i,
            set,
        })
    }

    pub fn m_e(&self) -> usize {
        self.a_e.nrows()
    }

    pub fn m_i(&self) -> usize {
        self.a_i.nrows()
    }

    pub fn svec_dim(&self) -> usize {
        svec_len(self.n)
    }

    /// Spectral norm of `Q`.
    pub fn q_norm(&self) -> T {
        self.q_norm
    }

    pub fn q_is_vacuous(&self) -> bool {
        self.q.is_vacuous()
    }

    pub fn c_svec(&self) -> DVector<T> {
        svec(&self.c)
    }

    pub fn primal_objective(&self, x: &DMatrix<T>) -> Result<T> {
        let qx = apply_q(&self.q, x)?;
        Ok(qx.dot(x) * T::lit(0.5) + self.c.dot(x))
    }

    /// `X` from `svec` coordinates.
    pub fn matrix(&self, v: &DVector<T>) -> Result<DMatrix<T>> {
        smat(v, self.n)
    }
}

/// `alpha = sqrt(||A_I||) / 2`, or 1 without inequality constraints.
pub fn scaling_matrix<T: Real>(a_i: &ConstraintMap<T>) -> T {
    if a_i.nrows() == 0 {
        return T::one();
    }
    a_i.norm().sqrt() * T::lit(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_symmetric, random_vector, rng};
    use crate::svec::svec_index;

    fn identity_constraint(n: usize) -> ConstraintMap<f64> {
        let t: Vec<(usize, usize, f64)> = (0..n).map(|i| (0, svec_index(i, i), 1.0)).collect();
        ConstraintMap::from_triplets(1, n, &t).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let a: f64 = scaling_matrix(&identity_constraint(2));
        assert!((a - 2f64.powf(0.25) / 2.0).abs() < 1e-8);
        assert_eq!(scaling_matrix(&ConstraintMap::<f64>::empty(3)), 1.0);
        // orthonormal rows
        let t = vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)];
        let m = ConstraintMap::<f64>::from_triplets(3, 2, &t).unwrap();
        assert!((scaling_matrix(&m) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn adjoint_consistency() {
        let mut r = rng(8);
        let n = 4;
        let nv = svec_len(n);
        let mut t = Vec::new();
        for k in 0..12 {
            t.push((k % 5, (3 * k + 1) % nv, (k as f64).sin()));
        }
        let a = ConstraintMap::from_triplets(5, n, &t).unwrap();
        for _ in 0..20 {
            let x = random_symmetric(&mut r, n);
            let y = random_vector(&mut r, 5);
            let lhs = a.apply_matrix(&x).dot(&y);
            let rhs = smat(&a.adjoint(&y), n).unwrap().dot(&x);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
        assert!((a.dense() * a.dense().transpose() - a.gram()).amax() < 1e-14);
    }

    #[test]
    fn rejects_bad_data() {
        let n = 2;
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let err = QsdpProblem::new(
            n,
            QOperatorSpec::Vacuous,
            c,
            ConstraintMap::empty(n),
            DVector::zeros(0),
            ConstraintMap::empty(n),
            DVector::zeros(0),
            BoxSet::nonneg(n),
        );
        assert!(err.is_err());
        assert!(ConstraintMap::<f64>::from_triplets(1, 2, &[(0, 3, 1.0)]).is_err());
    }
}
