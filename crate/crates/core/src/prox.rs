//! Proximal mappings and projections for the nonsmooth terms handled by the
//! solvers: PSD cone indicator, box indicators, nonnegative orthant and the
//! support function of a box evaluated at `-u`.
//!
//! Only scalar and diagonal metrics are supported for nonsmooth terms; every
//! such block is given a diagonal metric by construction of its proximal term.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;
use crate::svec::{order_from_len, smat, svec, svec_len, symmetrize};

/// Closed proper convex functions with closed-form proximal mappings.
#[derive(Debug, Clone, PartialEq)]
pub enum SimpleFunctionSpec<T: Real> {
    /// `theta = 0`.
    Zero,
    /// Indicator of the nonnegative orthant.
    Nonneg,
    /// Indicator of `{u : lower <= u <= upper}`; bounds may be infinite.
    Box { lower: DVector<T>, upper: DVector<T> },
    /// `theta(u) = delta_N^*(-u)` with `N = {x : lower <= x <= upper}`.
    SupportOfBox { lower: DVector<T>, upper: DVector<T> },
    /// Indicator of the PSD cone of order `n`, acting on `svec` coordinates.
    PsdCone { n: usize },
    /// Separable sum over consecutive sub-blocks of the given lengths.
    Product(Vec<(usize, SimpleFunctionSpec<T>)>),
}

/// Metric of a proximal mapping.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric<T: Real> {
    Scalar(T),
    Diagonal(DVector<T>),
    Dense(DMatrix<T>),
}

impl<T: Real> Metric<T> {
    fn name(&self) -> &'static str {
        match self {
            Metric::Scalar(_) => "scalar",
            Metric::Diagonal(_) => "diagonal",
            Metric::Dense(_) => "dense",
        }
    }

    /// Collapses a diagonal metric with equal entries to a scalar.
    fn simplify(&self) -> Metric<T> {
        if let Metric::Diagonal(d) = self {
            if d.len() > 0 && d.iter().all(|&x| x == d[0]) {
                return Metric::Scalar(d[0]);
            }
        }
        self.clone()
    }

    fn restrict(&self, start: usize, len: usize) -> Metric<T> {
        match self {
            Metric::Scalar(s) => Metric::Scalar(*s),
            Metric::Diagonal(d) => Metric::Diagonal(d.rows(start, len).into_owned()),
            Metric::Dense(m) => Metric::Dense(m.view((start, start), (len, len)).into_owned()),
        }
    }

    fn weight(&self, k: usize) -> T {
        match self {
            Metric::Scalar(s) => *s,
            Metric::Diagonal(d) => d[k],
            Metric::Dense(m) => m[(k, k)],
        }
    }
}

/// Value of a support function, which may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportValue<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> SupportValue<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            SupportValue::Finite(v) => Some(v),
            SupportValue::Infinite => None,
        }
    }
}

impl<T: Real> SimpleFunctionSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            SimpleFunctionSpec::Zero => "zero",
            SimpleFunctionSpec::Nonneg => "indicator-nonneg",
            SimpleFunctionSpec::Box { .. } => "indicator-box",
            SimpleFunctionSpec::SupportOfBox { .. } => "support-of-box",
            SimpleFunctionSpec::PsdCone { .. } => "indicator-psd-cone",
            SimpleFunctionSpec::Product(_) => "product",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SimpleFunctionSpec::Zero => true,
            SimpleFunctionSpec::Product(parts) => parts.iter().all(|(_, s)| s.is_zero()),
            _ => false,
        }
    }

    /// Checks internal consistency against the block dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            SimpleFunctionSpec::Zero | SimpleFunctionSpec::Nonneg => Ok(()),
            SimpleFunctionSpec::Box { lower, upper } | SimpleFunctionSpec::SupportOfBox { lower, upper } => {
                check_dim("box lower bound", dim, lower.len())?;
                check_dim("box upper bound", dim, upper.len())?;
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(Error::InvalidSpec("box requires lower <= upper".into()));
                }
                if let SimpleFunctionSpec::SupportOfBox { .. } = self {
                    if lower.iter().zip(upper.iter()).any(|(l, u)| !l.is_finite() && !u.is_finite()) {
                        return Err(Error::InvalidSpec(
                            "support function of an unbounded coordinate is not proper".into(),
                        ));
                    }
                }
                Ok(())
            }
            SimpleFunctionSpec::PsdCone { n } => check_dim("psd cone svec length", svec_len(*n), dim),
            SimpleFunctionSpec::Product(parts) => {
                let total: usize = parts.iter().map(|(l, _)| *l).sum();
                check_dim("product spec length", dim, total)?;
                for (l, s) in parts {
                    s.validate(*l)?;
                }
                Ok(())
            }
        }
    }

    /// Projection onto the closure of `dom theta`.
    pub fn project_domain(&self, u: &DVector<T>) -> Result<DVector<T>> {
        match self {
            SimpleFunctionSpec::Zero => Ok(u.clone()),
            SimpleFunctionSpec::Nonneg => Ok(u.map(|x| x.max(T::zero()))),
            SimpleFunctionSpec::Box { lower, upper } => clamp(u, lower, upper),
            SimpleFunctionSpec::SupportOfBox { lower, upper } => {
                check_dim("support spec", lower.len(), u.len())?;
                Ok(DVector::from_fn(u.len(), |k, _| {
                    let mut z = u[k];
                    if !upper[k].is_finite() {
                        z = z.max(T::zero());
                    }
                    if !lower[k].is_finite() {
                        z = z.min(T::zero());
                    }
                    z
                }))
            }
            SimpleFunctionSpec::PsdCone { n } => project_psd_svec(u, *n),
            SimpleFunctionSpec::Product(parts) => {
                let mut out = u.clone();
                let mut off = 0;
                for (l, s) in parts {
                    let piece = s.project_domain(&u.rows(off, *l).into_owned())?;
                    out.rows_mut(off, *l).copy_from(&piece);
                    off += l;
                }
                Ok(out)
            }
        }
    }

    /// `dist(w, partial theta(u))`. Returns `+inf` when `u` is outside the
    /// domain by more than `tol`; coordinates within `tol` of a bound are
    /// treated as active.
    pub fn subdifferential_distance(&self, u: &DVector<T>, w: &DVector<T>, tol: T) -> Result<T> {
        check_dim("subdifferential point", u.len(), w.len())?;
        let sq = self.subdifferential_distance_sq(u, w, tol)?;
        Ok(sq.sqrt())
    }

    fn subdifferential_distance_sq(&self, u: &DVector<T>, w: &DVector<T>, tol: T) -> Result<T> {
        let zero = T::zero();
        match self {
            SimpleFunctionSpec::Zero => Ok(w.norm_squared()),
            SimpleFunctionSpec::Nonneg => {
                let n = u.len();
                let lower = DVector::zeros(n);
                let upper = DVector::from_element(n, T::infinity());
                box_normal_distance_sq(u, w, &lower, &upper, tol)
            }
            SimpleFunctionSpec::Box { lower, upper } => box_normal_distance_sq(u, w, lower, upper, tol),
            SimpleFunctionSpec::SupportOfBox { lower, upper } => {
                // d theta(u)_k = -argmax_{x in [l,u]} (-u_k x).
                let mut acc = zero;
                for k in 0..u.len() {
                    let (lo, hi) = if u[k] > tol {
                        (-lower[k], -lower[k])
                    } else if u[k] < -tol {
                        (-upper[k], -upper[k])
                    } else {
                        (-upper[k], -lower[k])
                    };
                    if !lo.is_finite() && !hi.is_finite() && lo == hi {
                        return Ok(T::infinity());
                    }
                    let d = if w[k] < lo {
                        lo - w[k]
                    } else if w[k] > hi {
                        w[k] - hi
                    } else {
                        zero
                    };
                    acc += d * d;
                }
                Ok(acc)
            }
            SimpleFunctionSpec::PsdCone { n } => {
                let x = smat(u, *n)?;
                let eig = SymmetricEigen::new(symmetrize(&x));
                let scale = eig.eigenvalues.amax().max(T::one());
                if eig.eigenvalues.iter().any(|&l| l < -tol * scale) {
                    return Ok(T::infinity());
                }
                // N(X) = {-U2 M U2^T : M psd} for the null-space basis U2.
                let null: Vec<usize> = (0..*n).filter(|&i| eig.eigenvalues[i] <= tol * scale).collect();
                let wm = smat(w, *n)?;
                let total = wm.norm_squared();
                if null.is_empty() {
                    return Ok(total);
                }
                let u2 = DMatrix::from_fn(*n, null.len(), |r, c| eig.eigenvectors[(r, null[c])]);
                let inner = -(u2.transpose() * &wm * &u2);
                let proj = project_psd(&inner)?;
                Ok((total - proj.norm_squared()).max(zero))
            }
            SimpleFunctionSpec::Product(parts) => {
                let mut acc = zero;
                let mut off = 0;
                for (l, s) in parts {
                    acc += s.subdifferential_distance_sq(
                        &u.rows(off, *l).into_owned(),
                        &w.rows(off, *l).into_owned(),
                        tol,
                    )?;
                    off += l;
                }
                Ok(acc)
            }
        }
    }
}

fn box_normal_distance_sq<T: Real>(
    u: &DVector<T>,
    w: &DVector<T>,
    lower: &DVector<T>,
    upper: &DVector<T>,
    tol: T,
) -> Result<T> {
    check_dim("box bound", u.len(), lower.len())?;
    let mut acc = T::zero();
    for k in 0..u.len() {
        if u[k] < lower[k] - tol || u[k] > upper[k] + tol {
            return Ok(T::infinity());
        }
        let at_lo = u[k] <= lower[k] + tol;
        let at_hi = u[k] >= upper[k] - tol;
        let d = match (at_lo, at_hi) {
            (true, true) => T::zero(),
            (true, false) => w[k].max(T::zero()),
            (false, true) => w[k].min(T::zero()),
            (false, false) => w[k],
        };
        acc += d * d;
    }
    Ok(acc)
}

fn clamp<T: Real>(u: &DVector<T>, lower: &DVector<T>, upper: &DVector<T>) -> Result<DVector<T>> {
    check_dim("box lower bound", u.len(), lower.len())?;
    check_dim("box upper bound", u.len(), upper.len())?;
    Ok(DVector::from_fn(u.len(), |k, _| u[k].max(lower[k]).min(upper[k])))
}

/// Euclidean projection onto the PSD cone, `U max(Lambda, 0) U^T`.
///
/// The input is symmetrized first.
pub fn project_psd<T: Real>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.nrows() != x.ncols() {
        return Err(Error::Structural("PSD projection needs a square matrix".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("PSD projection input has non-finite entries".into()));
    }
    let n = x.nrows();
    if n == 0 {
        return Ok(x.clone());
    }
    let eig = SymmetricEigen::new(symmetrize(x));
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        let cond = x.amax();
        return Err(Error::Numerical(format!(
            "symmetric eigendecomposition failed (max |entry| {:e})",
            cond.to_f64_lossy()
        )));
    }
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l > T::zero() {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) * l;
        }
    }
    Ok(symmetrize(&out))
}

/// PSD projection in `svec` coordinates.
pub fn project_psd_svec<T: Real>(v: &DVector<T>, n: usize) -> Result<DVector<T>> {
    Ok(svec(&project_psd(&smat(v, n)?)?))
}

/// Entrywise clamp `min(max(X, L), U)`.
pub fn project_box<T: Real>(x: &DMatrix<T>, lower: &DMatrix<T>, upper: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.shape() != lower.shape() || x.shape() != upper.shape() {
        return Err(Error::Structural(format!(
            "box projection shape mismatch: {:?} vs {:?}/{:?}",
            x.shape(),
            lower.shape(),
            upper.shape()
        )));
    }
    if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
        return Err(Error::InvalidSpec("box requires lower <= upper".into()));
    }
    Ok(x.zip_zip_map(lower, upper, |v, l, u| v.max(l).min(u)))
}

/// `delta_N^*(-Z) = sum_ij max(-Z_ij U_ij, -Z_ij L_ij)` for the entrywise box
/// `N = [L, U]`. Entries with `|Z_ij| <= tol` contribute nothing; an entry
/// pushing towards an infinite bound makes the value `+inf`.
pub fn support_value<T: Real>(lower: &DMatrix<T>, upper: &DMatrix<T>, z: &DMatrix<T>, tol: T) -> Result<SupportValue<T>> {
    if z.shape() != lower.shape() || z.shape() != upper.shape() {
        return Err(Error::Structural("support value shape mismatch".into()));
    }
    let mut acc = T::zero();
    for ((&zij, &l), &u) in z.iter().zip(lower.iter()).zip(upper.iter()) {
        match scalar_support(-zij, l, u, tol) {
            SupportValue::Finite(v) => acc += v,
            SupportValue::Infinite => return Ok(SupportValue::Infinite),
        }
    }
    Ok(SupportValue::Finite(acc))
}

/// `sup_{x in [l,u]} a x` with `|a| <= tol` treated as zero.
fn scalar_support<T: Real>(a: T, l: T, u: T, tol: T) -> SupportValue<T> {
    if a > tol {
        if u.is_finite() {
            SupportValue::Finite(a * u)
        } else {
            SupportValue::Infinite
        }
    } else if a < -tol {
        if l.is_finite() {
            SupportValue::Finite(a * l)
        } else {
            SupportValue::Infinite
        }
    } else {
        let mut best = T::zero();
        if u.is_finite() {
            best = best.max(a * u);
        }
        if l.is_finite() {
            best = best.max(a * l);
        }
        SupportValue::Finite(best)
    }
}

/// Vector form of [`support_value`] for a [`SimpleFunctionSpec::SupportOfBox`].
pub fn support_value_vec<T: Real>(lower: &DVector<T>, upper: &DVector<T>, z: &DVector<T>, tol: T) -> Result<SupportValue<T>> {
    check_dim("support value", lower.len(), z.len())?;
    let mut acc = T::zero();
    for k in 0..z.len() {
        match scalar_support(-z[k], lower[k], upper[k], tol) {
            SupportValue::Finite(v) => acc += v,
            SupportValue::Infinite => return Ok(SupportValue::Infinite),
        }
    }
    Ok(SupportValue::Finite(acc))
}

/// Minimizer of `max(-z l, -z u) + (m/2)(z - y)^2` over scalar `z`.
fn support_prox_scalar<T: Real>(y: T, l: T, u: T, m: T) -> T {
    let a = y + l / m;
    if a > T::zero() {
        return a;
    }
    let b = y + u / m;
    if b < T::zero() {
        return b;
    }
    T::zero()
}

/// `argmin_v { theta(v) + 1/2 ||v - y||_M^2 }`.
pub fn prox_metric<T: Real>(spec: &SimpleFunctionSpec<T>, metric: &Metric<T>, y: &DVector<T>) -> Result<DVector<T>> {
    let metric = metric.simplify();
    if let Metric::Diagonal(d) = &metric {
        check_dim("diagonal metric", y.len(), d.len())?;
        if d.iter().any(|&w| w <= T::zero()) {
            return Err(Error::Indefinite {
                context: "diagonal prox metric",
                value: d.min().to_f64_lossy(),
            });
        }
    }
    if let Metric::Scalar(s) = &metric {
        if *s <= T::zero() {
            return Err(Error::Indefinite {
                context: "scalar prox metric",
                value: s.to_f64_lossy(),
            });
        }
    }
    let unsupported = || Error::UnsupportedMetric {
        spec: spec.name(),
        metric: metric.name(),
    };
    match spec {
        SimpleFunctionSpec::Zero => Ok(y.clone()),
        SimpleFunctionSpec::Nonneg => match metric {
            Metric::Dense(_) => Err(unsupported()),
            _ => Ok(y.map(|v| v.max(T::zero()))),
        },
        SimpleFunctionSpec::Box { lower, upper } => match metric {
            Metric::Dense(_) => Err(unsupported()),
            _ => clamp(y, lower, upper),
        },
        SimpleFunctionSpec::SupportOfBox { lower, upper } => match metric {
            Metric::Dense(_) => Err(unsupported()),
            _ => {
                check_dim("support spec", lower.len(), y.len())?;
                Ok(DVector::from_fn(y.len(), |k, _| {
                    support_prox_scalar(y[k], lower[k], upper[k], metric.weight(k))
                }))
            }
        },
        SimpleFunctionSpec::PsdCone { n } => match metric {
            Metric::Scalar(_) => {
                check_dim("psd cone svec length", svec_len(*n), y.len())?;
                project_psd_svec(y, *n)
            }
            _ => Err(unsupported()),
        },
        SimpleFunctionSpec::Product(parts) => {
            if let Metric::Dense(_) = metric {
                if !spec.is_zero() {
                    return Err(unsupported());
                }
            }
            let mut out = y.clone();
            let mut off = 0;
            for (l, s) in parts {
                let piece = prox_metric(s, &metric.restrict(off, *l), &y.rows(off, *l).into_owned())?;
                out.rows_mut(off, *l).copy_from(&piece);
                off += l;
            }
            Ok(out)
        }
    }
}

/// Convenience: the order of the PSD cone for an `svec` vector length.
pub fn psd_order(len: usize) -> Result<usize> {
    order_from_len(len)
}
