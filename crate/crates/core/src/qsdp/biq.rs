use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{BoxSet, ConstraintMap, QOperatorSpec, QsdpProblem};
use crate::error::{Error, Result};
use crate::random::{random_matrix, random_symmetric, random_vector};
use crate::scalar::Real;
use crate::svec::{svec_index, svec_len};

/// Kind of quadratic term attached to a generated BIQ relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BiqVariant {
    /// `Q` vacuous: the linear doubly nonnegative SDP relaxation.
    Linear,
    Explicit,
    SymKron,
    Lyapunov,
}

impl BiqVariant {
    pub const ALL: [BiqVariant; 4] = [
        BiqVariant::Linear,
        BiqVariant::Explicit,
        BiqVariant::SymKron,
        BiqVariant::Lyapunov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BiqVariant::Linear => "linear",
            BiqVariant::Explicit => "explicit",
            BiqVariant::SymKron => "sym-kronecker",
            BiqVariant::Lyapunov => "lyapunov",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// QSDP relaxation of `min 1/2 x^T Qbar x + <c, x>` over `x in {0, 1}^{n-1}`
/// in the lifted variable `X = [Xbar, x; x^T, 1]` of order `n`, with the
/// triangle inequalities and `N = {X >= 0}`.
pub fn generate_biq<T: Real>(qbar: &DMatrix<T>, c: &DVector<T>, q: QOperatorSpec<T>) -> Result<QsdpProblem<T>> {
    let m = c.len();
    let n = m + 1;
    if n < 3 {
        return Err(Error::Domain(format!("BIQ lift needs order n >= 3, got {n}")));
    }
    if qbar.nrows() != m || qbar.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "Qbar order",
            expected: m,
            found: qbar.nrows(),
        });
    }
    let half = T::lit(0.5);
    let r = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let last = n - 1;

    let mut cm = DMatrix::zeros(n, n);
    cm.view_mut((0, 0), (m, m)).copy_from(&(qbar * half));
    for i in 0..m {
        cm[(i, last)] = c[i] * half;
        cm[(last, i)] = c[i] * half;
    }

    // diag(Xbar) = x and X_nn = 1
    let mut eq = Vec::new();
    for i in 0..m {
        eq.push((i, svec_index(i, i), T::one()));
        eq.push((i, svec_index(i, last), -r));
    }
    eq.push((m, svec_index(last, last), T::one()));
    let mut b_e = DVector::zeros(n);
    b_e[m] = T::one();

    let mut ineq = Vec::new();
    let mut b_i = Vec::new();
    let mut row = 0;
    for j in 0..m {
        for i in 0..j {
            // x_i - X_ij >= 0, x_j - X_ij >= 0, X_ij - x_i - x_j >= -1
            ineq.push((row, svec_index(i, last), r));
            ineq.push((row, svec_index(i, j), -r));
            b_i.push(T::zero());
            ineq.push((row + 1, svec_index(j, last), r));
            ineq.push((row + 1, svec_index(i, j), -r));
            b_i.push(T::zero());
            ineq.push((row + 2, svec_index(i, j), r));
            ineq.push((row + 2, svec_index(i, last), -r));
            ineq.push((row + 2, svec_index(j, last), -r));
            b_i.push(-T::one());
            row += 3;
        }
    }
    QsdpProblem::new(
        n,
        q,
        cm,
        ConstraintMap::from_triplets(n, n, &eq)?,
        b_e,
        ConstraintMap::from_triplets(row, n, &ineq)?,
        DVector::from_vec(b_i),
        BoxSet::nonneg(n),
    )
}

/// Small positive definite random operands for `Q` on matrices of order `n`.
pub fn random_q_spec<R: Rng>(rng: &mut R, n: usize, variant: BiqVariant) -> QOperatorSpec<f64> {
    let operand = |rng: &mut R, k: usize| {
        let g = random_matrix(rng, k, k);
        (&g * g.transpose() + DMatrix::identity(k, k) * 0.1) * (0.5 / k as f64)
    };
    match variant {
        BiqVariant::Linear => QOperatorSpec::Vacuous,
        BiqVariant::Explicit => QOperatorSpec::Explicit(operand(rng, svec_len(n))),
        BiqVariant::SymKron => QOperatorSpec::SymKron {
            a: operand(rng, n),
            b: operand(rng, n),
        },
        BiqVariant::Lyapunov => QOperatorSpec::Lyapunov { a: operand(rng, n) },
    }
}

/// Random BIQ relaxation of order `n` with `Qbar`, `c` uniform in `[-1, 1]`.
pub fn random_biq<R: Rng>(rng: &mut R, n: usize, variant: BiqVariant) -> Result<QsdpProblem<f64>> {
    if n < 3 {
        return Err(Error::Domain(format!("BIQ lift needs order n >= 3, got {n}")));
    }
    let qbar = random_symmetric(rng, n - 1);
    let c = random_vector(rng, n - 1);
    let q = random_q_spec(rng, n, variant);
    generate_biq(&qbar, &c, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng;
    use crate::svec::svec;

    #[test]
    fn constraint_counts() {
        let mut r = rng(0);
        for (n, me, mi) in [(3, 3, 3), (4, 4, 9), (6, 6, 30)] {
            let p = random_biq(&mut r, n, BiqVariant::Linear).unwrap();
            assert_eq!((p.m_e(), p.m_i()), (me, mi));
            assert_eq!(mi, 3 * (n - 1) * (n - 2) / 2);
        }
        assert!(random_biq(&mut r, 2, BiqVariant::Linear).is_err());
    }

    #[test]
    fn binary_lifts_are_feasible() {
        let mut r = rng(1);
        for n in 3..=6 {
            let p = random_biq(&mut r, n, BiqVariant::Lyapunov).unwrap();
            for mask in 0..(1u32 << (n - 1)) {
                let mut v = DVector::from_element(n, 1.0);
                for i in 0..n - 1 {
                    v[i] = ((mask >> i) & 1) as f64;
                }
                let x = &v * v.transpose();
                let xs = svec(&x);
                assert!((p.a_e.apply(&xs) - &p.b_e).amax() < 1e-12);
                assert!((p.a_i.apply(&xs) - &p.b_i).min() > -1e-12);
                assert!(x.min() >= 0.0);
            }
        }
    }

    #[test]
    fn objective_matches_binary_program() {
        let mut r = rng(2);
        let qbar = random_symmetric(&mut r, 4);
        let c = random_vector(&mut r, 4);
        let p = generate_biq(&qbar, &c, QOperatorSpec::Vacuous).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0]);
        let v = DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0, 1.0]);
        let lifted = &v * v.transpose();
        let expect = (&qbar * &x).dot(&x) * 0.5 + c.dot(&x);
        assert!((p.primal_objective(&lifted).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn random_operands_are_valid() {
        let mut r = rng(3);
        for v in BiqVariant::ALL {
            random_q_spec(&mut r, 5, v).validate(5).unwrap();
            assert_eq!(BiqVariant::parse(v.name()), Some(v));
        }
    }
}
