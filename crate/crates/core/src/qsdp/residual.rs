use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{apply_q, DualIterate, QsdpProblem};
use crate::error::{check_dim, Result};
use crate::prox::{project_psd, support_value, SupportValue};
use crate::scalar::Real;
use crate::svec::smat;

/// Relative KKT residuals of a QSDP primal-dual point, objective values and
/// the relative duality gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub eta_d: f64,
    pub eta_x: f64,
    pub eta_z: f64,
    pub eta_p: f64,
    pub eta_w: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    pub eta_qsdp: f64,
    pub obj_primal: f64,
    pub obj_dual: f64,
    pub eta_gap: f64,
}

impl ResidualReport {
    /// `(name, value)` for the seven components of `eta_qsdp`.
    pub fn components(&self) -> [(&'static str, f64); 7] {
        [
            ("eta_D", self.eta_d),
            ("eta_X", self.eta_x),
            ("eta_Z", self.eta_z),
            ("eta_P", self.eta_p),
            ("eta_W", self.eta_w),
            ("eta_S", self.eta_s),
            ("eta_I", self.eta_i),
        ]
    }
}

fn f<T: Real>(v: T) -> f64 {
    v.to_f64_lossy()
}

/// Residuals of `point` for `problem`; all norms are Frobenius/Euclidean and
/// `||Q||` is the spectral norm.
pub fn kkt_residuals<T: Real>(problem: &QsdpProblem<T>, point: &DualIterate<T>) -> Result<ResidualReport> {
    let p = problem;
    let n = p.n;
    check_dim("X order", n, point.x.nrows())?;
    check_dim("Z order", n, point.z.nrows())?;
    check_dim("W order", n, point.w.nrows())?;
    check_dim("S order", n, point.s.nrows())?;
    check_dim("y_E length", p.m_e(), point.y_e.len())?;
    check_dim("y_I length", p.m_i(), point.y_i.len())?;
    let one = T::one();
    let (x, z, w, s) = (&point.x, &point.z, &point.w, &point.s);
    let nx = x.norm();

    let qw = apply_q(&p.q, w)?;
    let qx = apply_q(&p.q, x)?;
    let aty = smat(&(p.a_e.adjoint(&point.y_e) + p.a_i.adjoint(&point.y_i)), n)?;
    let dual = &aty + s + z - &qw - &p.c;
    let eta_d = dual.norm() / (one + p.c.norm());

    let eta_x = (x - p.set.project(x)?).norm() / (one + nx);
    let eta_z = (x - p.set.project(&(x - z))?).norm() / (one + nx + z.norm());

    let eta_p = if p.m_e() > 0 {
        (p.a_e.apply_matrix(x) - &p.b_e).norm() / (one + p.b_e.norm())
    } else {
        T::zero()
    };
    let eta_w = (&qx - &qw).norm() / (one + p.q_norm());
    let eta_s = ((x - project_psd(x)?).norm() / (one + nx)).max(x.dot(s).abs() / (one + nx + s.norm()));

    let eta_i = if p.m_i() > 0 {
        let y = &point.y_i;
        let g = p.a_i.apply_matrix(x) - &p.b_i;
        let neg = |v: &DVector<T>| v.map(|e| e.min(T::zero())).norm();
        (neg(y) / (one + y.norm()))
            .max(neg(&g) / (one + p.b_i.norm()))
            .max(g.dot(y).abs() / (one + g.norm() + y.norm()))
    } else {
        T::zero()
    };

    let obj_primal = qx.dot(x) * T::lit(0.5) + p.c.dot(x);
    let support = support_value(&p.set.lower, &p.set.upper, z, T::zero())?;
    let obj_dual = match support {
        SupportValue::Finite(v) => {
            Some(-v - qw.dot(w) * T::lit(0.5) + p.b_e.dot(&point.y_e) + p.b_i.dot(&point.y_i))
        }
        SupportValue::Infinite => None,
    };
    let (obj_dual, eta_gap) = match obj_dual {
        Some(d) => (f(d), f((obj_primal - d) / (one + obj_primal.abs() + d.abs()))),
        None => (f64::NEG_INFINITY, 1.0),
    };

    let mut r = ResidualReport {
        eta_d: f(eta_d),
        eta_x: f(eta_x),
        eta_z: f(eta_z),
        eta_p: f(eta_p),
        eta_w: f(eta_w),
        eta_s: f(eta_s),
        eta_i: f(eta_i),
        eta_qsdp: 0.0,
        obj_primal: f(obj_primal),
        obj_dual,
        eta_gap,
    };
    r.eta_qsdp = r.components().iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::qsdp::{BoxSet, ConstraintMap, QOperatorSpec};
    use crate::svec::svec_index;

    /// `min <C, X>  s.t.  trace X = 1, X psd` with `C = diag(1, 2)`:
    /// `X = diag(1, 0)`, `y = 1`, `S = diag(0, 1)`. `N` is the box
    /// `[-10, 10]` so the optimum is interior and `Z = 0`.
    fn toy() -> (QsdpProblem<f64>, DualIterate<f64>) {
        let n = 2;
        let a_e = ConstraintMap::from_triplets(1, n, &[(0, svec_index(0, 0), 1.0), (0, svec_index(1, 1), 1.0)]).unwrap();
        let set = BoxSet {
            lower: DMatrix::from_element(2, 2, -10.0),
            upper: DMatrix::from_element(2, 2, 10.0),
        };
        let p = QsdpProblem::new(
            n,
            QOperatorSpec::Vacuous,
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            a_e,
            DVector::from_vec(vec![1.0]),
            ConstraintMap::empty(n),
            DVector::zeros(0),
            set,
        )
        .unwrap();
        let mut it = DualIterate::zeros(2, 1, 0);
        it.x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        it.s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        it.y_e[0] = 1.0;
        (p, it)
    }

    #[test]
    fn exact_kkt_point() {
        let (p, it) = toy();
        let r = kkt_residuals(&p, &it).unwrap();
        assert!(r.eta_qsdp < 1e-10, "{r:?}");
        assert!(r.eta_gap.abs() < 1e-10);
        assert!((r.obj_primal - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_d_is_linear_in_y_e() {
        let (p, it) = toy();
        let mut prev: Option<f64> = None;
        for t in [1e-3, 2e-3, 4e-3] {
            let mut q = it.clone();
            q.y_e[0] += t;
            let e = kkt_residuals(&p, &q).unwrap().eta_d;
            if let Some(pe) = prev {
                assert!((e / pe - 2.0).abs() < 1e-9);
            }
            prev = Some(e);
        }
    }

    #[test]
    fn negative_eigenvalue_costs_half() {
        let (p, mut it) = toy();
        it.x = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0]));
        let r = kkt_residuals(&p, &it).unwrap();
        assert!(r.eta_s >= 0.5 - 1e-15);
    }
}
