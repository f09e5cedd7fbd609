use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;
use crate::svec::{smat, svec, svec_len};

/// Self-adjoint PSD operator `Q` on symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum QOperatorSpec<T: Real> {
    Vacuous,
    /// PSD matrix acting on `svec` coordinates.
    Explicit(DMatrix<T>),
    /// `Q(X) = (A X B + B X A) / 2`.
    SymKron { a: DMatrix<T>, b: DMatrix<T> },
    /// `Q(X) = (A X + X A) / 2`.
    Lyapunov { a: DMatrix<T> },
}

fn check_psd_operand<T: Real>(m: &DMatrix<T>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Structural(format!(
            "{what} operand is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(T::one());
    if (m - m.transpose()).amax() > T::lit(1e-12) * scale {
        return Err(Error::Structural(format!("{what} operand is not symmetric")));
    }
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if min < -T::lit(1e-10) * scale {
        return Err(Error::Indefinite {
            context: "Q operand",
            value: min.to_f64_lossy(),
        });
    }
    Ok(())
}

impl<T: Real> QOperatorSpec<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            QOperatorSpec::Vacuous => "vacuous",
            QOperatorSpec::Explicit(_) => "explicit",
            QOperatorSpec::SymKron { .. } => "sym-kronecker",
            QOperatorSpec::Lyapunov { .. } => "lyapunov",
        }
    }

    pub fn is_vacuous(&self) -> bool {
        matches!(self, QOperatorSpec::Vacuous)
    }

    /// Checks operand shapes, symmetry and positive semidefiniteness.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            QOperatorSpec::Vacuous => Ok(()),
            QOperatorSpec::Explicit(m) => check_psd_operand(m, svec_len(n), "explicit"),
            QOperatorSpec::SymKron { a, b } => {
                check_psd_operand(a, n, "sym-kronecker A")?;
                check_psd_operand(b, n, "sym-kronecker B")
            }
            QOperatorSpec::Lyapunov { a } => check_psd_operand(a, n, "lyapunov"),
        }
    }

    /// Eigenvalues of the Lyapunov operand with eigenvectors, when `Q` is of
    /// that kind.
    pub fn lyapunov_eigen(&self) -> Option<(DVector<T>, DMatrix<T>)> {
        match self {
            QOperatorSpec::Lyapunov { a } => {
                let e = SymmetricEigen::new(a.clone());
                Some((e.eigenvalues, e.eigenvectors))
            }
            _ => None,
        }
    }
}

/// `Q(X)`; rejects inputs that are not symmetric to `1e-12`.
pub fn apply_q<T: Real>(spec: &QOperatorSpec<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::Structural("Q needs a square argument".into()));
    }
    if (x - x.transpose()).amax() > T::lit(1e-12) * x.amax().max(T::one()) {
        return Err(Error::Structural("Q applied to a non-symmetric matrix".into()));
    }
    let half = T::lit(0.5);
    match spec {
        QOperatorSpec::Vacuous => Ok(DMatrix::zeros(n, n)),
        QOperatorSpec::Explicit(m) => {
            check_dim("explicit Q order", svec_len(n), m.nrows())?;
            smat(&(m * svec(x)), n)
        }
        QOperatorSpec::SymKron { a, b } => {
            check_dim("sym-kronecker order", n, a.nrows())?;
            let axb = a * x * b;
            Ok((&axb + axb.transpose()) * half)
        }
        QOperatorSpec::Lyapunov { a } => {
            check_dim("lyapunov order", n, a.nrows())?;
            let ax = a * x;
            Ok((&ax + ax.transpose()) * half)
        }
    }
}

/// `svec(Q(smat(v)))`.
pub fn apply_q_svec<T: Real>(spec: &QOperatorSpec<T>, v: &DVector<T>, n: usize) -> DVector<T> {
    match spec {
        QOperatorSpec::Vacuous => DVector::zeros(v.len()),
        QOperatorSpec::Explicit(m) => m * v,
        _ => {
            let x = smat(v, n).expect("svec length checked by caller");
            svec(&apply_q(spec, &x).expect("smat output is symmetric"))
        }
    }
}

/// Dense matrix of `Q` on `svec` coordinates.
pub fn q_matrix<T: Real>(spec: &QOperatorSpec<T>, n: usize) -> DMatrix<T> {
    let nv = svec_len(n);
    let mut out = DMatrix::zeros(nv, nv);
    let mut e = DVector::zeros(nv);
    for k in 0..nv {
        e[k] = T::one();
        out.set_column(k, &apply_q_svec(spec, &e, n));
        e[k] = T::zero();
    }
    (&out + out.transpose()) * T::lit(0.5)
}
