//! Inner solvers for the quadratic block subproblems: preconditioned CG,
//! the truncated-eigenvalue proximal term with its closed-form inverse, and a
//! cached Cholesky factorization of a Gram matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// Default number of retained eigenpairs.
pub const DEFAULT_RANK: usize = 5;

/// Statistics of one PCG run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CgStats<T> {
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
    /// `||r_k||` after every iteration (recurrence residual), starting with the
    /// initial residual.
    pub history: Vec<T>,
}

/// Proximal term `T = sigma * sum_{i>l} (lambda_{l+1} - lambda_i) P_i P_i^T`
/// built from the leading eigenpairs of `V`.
#[derive(Debug, Clone)]
pub struct TruncatedEigProx<T: Real> {
    l: usize,
    /// `lambda_1 >= ... >= lambda_l >= lambda_{l+1}`.
    lambdas: Vec<T>,
    p: DMatrix<T>,
    sigma: T,
    v: DMatrix<T>,
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub fn sorted_eigen<T: Real>(v: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(v.clone());
    let n = v.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn build_truncated_prox<T: Real>(v: &DMatrix<T>, l: usize, sigma: T) -> Result<TruncatedEigProx<T>> {
    if v.nrows() != v.ncols() {
        return Err(Error::Structural("truncated prox needs a square operator".into()));
    }
    let (vals, vecs) = sorted_eigen(v);
    TruncatedEigProx::from_eigen(v.clone(), &vals, &vecs, l, sigma)
}

impl<T: Real> TruncatedEigProx<T> {
    /// Builds from a precomputed decreasing eigen-decomposition of `v`.
    pub fn from_eigen(v: DMatrix<T>, vals: &[T], vecs: &DMatrix<T>, l: usize, sigma: T) -> Result<Self> {
        let n = v.nrows();
        if l >= n {
            return Err(Error::Domain(format!("rank {l} leaves no trailing eigenvalue for order {n}")));
        }
        if sigma <= T::zero() {
            return Err(Error::Domain("penalty sigma must be positive".into()));
        }
        let lambdas: Vec<T> = vals[..=l].to_vec();
        if lambdas[l] <= T::zero() {
            return Err(Error::Indefinite {
                context: "trailing eigenvalue of truncated prox",
                value: lambdas[l].to_f64_lossy(),
            });
        }
        let p = vecs.columns(0, l).into_owned();
        Ok(Self { l, lambdas, p, sigma, v })
    }

    pub fn rank(&self) -> usize {
        self.l
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.p
    }

    /// Same eigenpairs, different penalty.
    pub fn with_sigma(&self, sigma: T) -> Self {
        Self { sigma, ..self.clone() }
    }

    fn tail(&self) -> T {
        self.lambdas[self.l]
    }

    /// `P (Lambda_l - c) P^T v` with `c` subtracted from every retained eigenvalue.
    fn low_rank(&self, v: &DVector<T>, f: impl Fn(T) -> T) -> DVector<T> {
        if self.l == 0 {
            return DVector::zeros(v.len());
        }
        let mut coef = self.p.tr_mul(v);
        for (k, c) in coef.iter_mut().enumerate() {
            *c *= f(self.lambdas[k]);
        }
        &self.p * coef
    }

    /// `T v`.
    pub fn apply_t(&self, v: &DVector<T>) -> DVector<T> {
        let tail = self.tail();
        let lr = self.low_rank(v, |l| l - tail);
        (v * tail - &self.v * v + lr) * self.sigma
    }

    /// `(sigma V + T) v`.
    pub fn apply_system(&self, v: &DVector<T>) -> DVector<T> {
        let tail = self.tail();
        (v * tail + self.low_rank(v, |l| l - tail)) * self.sigma
    }

    /// `(sigma V + T)^{-1} v` in closed form.
    pub fn apply_inverse(&self, v: &DVector<T>) -> DVector<T> {
        let s = self.sigma;
        let it = T::one() / (s * self.tail());
        v * it + self.low_rank(v, |l| T::one() / (s * l) - it)
    }
}

/// Solves `op x = rhs` by preconditioned CG from `x = 0`.
///
/// Stops when `||op x - rhs|| <= tol * max(1, ||rhs||)` (true residual) or
/// after `maxit` iterations.
pub fn pcg_solve<T: Real>(
    op: impl Fn(&DVector<T>) -> DVector<T>,
    rhs: &DVector<T>,
    precond: impl Fn(&DVector<T>) -> DVector<T>,
    tol: T,
    maxit: usize,
) -> Result<(DVector<T>, CgStats<T>)> {
    pcg_solve_from(op, rhs, DVector::zeros(rhs.len()), precond, tol, maxit)
}

/// [`pcg_solve`] warm-started at `x0`.
pub fn pcg_solve_from<T: Real>(
    op: impl Fn(&DVector<T>) -> DVector<T>,
    rhs: &DVector<T>,
    x0: DVector<T>,
    precond: impl Fn(&DVector<T>) -> DVector<T>,
    tol: T,
    maxit: usize,
) -> Result<(DVector<T>, CgStats<T>)> {
    check_dim("pcg start", rhs.len(), x0.len())?;
    let target = tol * rhs.norm().max(T::one());
    let mut x = x0;
    let mut stats = CgStats {
        iterations: 0,
        residual: T::zero(),
        converged: false,
        history: Vec::new(),
    };
    // Restart from the true residual if the recurrence drifted.
    for _ in 0..4 {
        let mut r = rhs - op(&x);
        let mut rnorm = r.norm();
        if stats.history.is_empty() {
            stats.history.push(rnorm);
        }
        if rnorm <= target {
            stats.residual = rnorm;
            stats.converged = true;
            return Ok((x, stats));
        }
        if stats.iterations >= maxit {
            stats.residual = rnorm;
            return Ok((x, stats));
        }
        let mut zv = precond(&r);
        let mut rz = r.dot(&zv);
        let mut p = zv.clone();
        while stats.iterations < maxit && rnorm > target {
            let ap = op(&p);
            let curv = p.dot(&ap);
            if curv <= T::zero() || !curv.is_finite() {
                return Err(Error::CgBreakdown {
                    iteration: stats.iterations,
                    curvature: curv.to_f64_lossy(),
                });
            }
            let alpha = rz / curv;
            x.axpy(alpha, &p, T::one());
            r.axpy(-alpha, &ap, T::one());
            rnorm = r.norm();
            stats.iterations += 1;
            stats.history.push(rnorm);
            zv = precond(&r);
            let rz_new = r.dot(&zv);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &zv + p * beta;
        }
        let true_res = (rhs - op(&x)).norm();
        stats.residual = true_res;
        if true_res <= target {
            stats.converged = true;
            return Ok((x, stats));
        }
        if stats.iterations >= maxit {
            return Ok((x, stats));
        }
    }
    Ok((x, stats))
}

/// Cached Cholesky factorization of `A A^T` for a full-row-rank `A`.
#[derive(Debug, Clone)]
pub struct GramFactor<T: Real> {
    chol: Cholesky<T, Dyn>,
    dim: usize,
}

impl<T: Real> GramFactor<T> {
    /// Factors `A A^T` for the rows of `a`, rejecting linearly dependent rows.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let dependent = dependent_rows(a);
        if !dependent.is_empty() {
            return Err(Error::RankDeficient { rows: dependent });
        }
        Self::from_gram(a * a.transpose())
    }

    /// Factors a precomputed Gram matrix.
    pub fn from_gram(g: DMatrix<T>) -> Result<Self> {
        let dim = g.nrows();
        let chol = Cholesky::new(g).ok_or_else(|| Error::RankDeficient { rows: Vec::new() })?;
        Ok(Self { chol, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &DVector<T>) -> Result<DVector<T>> {
        check_dim("gram rhs", self.dim, rhs.len())?;
        Ok(self.chol.solve(rhs))
    }
}

/// Indices of rows that are (numerically) combinations of earlier rows.
pub fn dependent_rows<T: Real>(a: &DMatrix<T>) -> Vec<usize> {
    let tol = T::lit(1e-10);
    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        let row = a.row(i).transpose();
        let scale = row.norm();
        let mut w = row.clone();
        for q in &basis {
            let c = q.dot(&w);
            w.axpy(-c, q, T::one());
        }
        // second pass for stability
        for q in &basis {
            let c = q.dot(&w);
            w.axpy(-c, q, T::one());
        }
        let wn = w.norm();
        if wn <= tol * scale.max(T::one()) {
            out.push(i);
        } else {
            basis.push(w / wn);
        }
    }
    out
}

pub fn solve_normal_equations<T: Real>(gram_factor: &GramFactor<T>, rhs: &DVector<T>) -> Result<DVector<T>> {
    gram_factor.solve(rhs)
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
pub fn power_iteration<T: Real>(op: impl Fn(&DVector<T>) -> DVector<T>, n: usize, rtol: T, maxit: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    // deterministic start with all components excited
    let mut v = DVector::from_fn(n, |i, _| T::one() + T::lit(0.01 * (i % 7) as f64));
    v /= v.norm();
    let mut lambda = T::zero();
    for _ in 0..maxit {
        let w = op(&v);
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == T::zero() {
            return T::zero();
        }
        v = w / wn;
        if (next - lambda).abs() <= rtol * next.abs() {
            return next.max(wn);
        }
        lambda = next;
    }
    lambda
}
