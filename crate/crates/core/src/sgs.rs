//! One inexact symmetric Gauss-Seidel cycle over a block quadratic with a
//! nonsmooth term on the first block: a backward sweep over blocks `s..2`,
//! then a forward sweep over `1..s` with the option of reusing backward
//! iterates whose residual is already small enough.

use std::sync::Arc;

use nalgebra::DVector;

use crate::blockops::{sgs_operator_apply, BlockMap, BlockOperator, BlockPartition, BlockVector};
use crate::error::{check_dim, Error, Result};
use crate::prox::{prox_metric, Metric, SimpleFunctionSpec};
use crate::scalar::Real;
use crate::subsolve::{pcg_solve_from, CgStats};

/// Result of a single block solve. `residual` is the measured certificate
/// `H_ii x + (subgradient of theta_i at x) - rhs`.
#[derive(Debug, Clone)]
pub struct BlockSolve<T: Real> {
    pub x: DVector<T>,
    pub residual: DVector<T>,
    pub stats: Option<CgStats<T>>,
}

impl<T: Real> BlockSolve<T> {
    pub fn exact(x: DVector<T>) -> Self {
        let n = x.len();
        Self {
            x,
            residual: DVector::zeros(n),
            stats: None,
        }
    }
}

/// A block quadratic `1/2 <u, H u> - <b, u>` (plus `theta_i` on each block)
/// seen one block at a time.
pub trait SweepSystem<T: Real> {
    fn partition(&self) -> &Arc<BlockPartition>;

    /// `b_i`.
    fn rhs(&self, i: usize) -> DVector<T>;

    /// `sum_{j != i} H_ij u_j`.
    fn coupling(&self, i: usize, u: &BlockVector<T>) -> DVector<T>;

    /// `H_ii v`.
    fn apply_diag(&self, i: usize, v: &DVector<T>) -> DVector<T>;

    /// Approximately minimizes `theta_i(x) + 1/2 <x, H_ii x> - <r, x>`.
    /// The returned residual must have norm at most `tol` unless the solver
    /// reports non-convergence in its statistics.
    fn solve_block(&mut self, i: usize, r: &DVector<T>, warm: &DVector<T>, tol: T) -> Result<BlockSolve<T>>;
}

#[derive(Debug, Clone)]
pub struct SweepResult<T: Real> {
    pub u_plus: BlockVector<T>,
    /// Backward residuals; block 0 is a copy of `delta`'s block 0.
    pub delta_tilde: BlockVector<T>,
    pub delta: BlockVector<T>,
    /// `d(delta_tilde, delta)` when an explicit operator was available.
    pub d: Option<BlockVector<T>>,
    pub block_stats: Vec<(usize, CgStats<T>)>,
    /// Forward-sweep blocks that reused the backward iterate.
    pub skipped: Vec<usize>,
}

impl<T: Real> SweepResult<T> {
    pub fn pcg_iterations(&self) -> usize {
        self.block_stats.iter().map(|(_, s)| s.iterations).sum()
    }
}

fn block_rhs<T: Real, S: SweepSystem<T> + ?Sized>(sys: &S, i: usize, u: &BlockVector<T>) -> DVector<T> {
    sys.rhs(i) - sys.coupling(i, u)
}

/// One sGS cycle started from `u_minus`.
pub fn sgs_cycle<T: Real, S: SweepSystem<T> + ?Sized>(
    sys: &mut S,
    u_minus: &BlockVector<T>,
    inner_tol: T,
    skip_factor: T,
) -> Result<SweepResult<T>> {
    let p = Arc::clone(sys.partition());
    if u_minus.partition().as_ref() != p.as_ref() {
        return Err(Error::Structural("starting point partition differs from system".into()));
    }
    let s = p.num_blocks();
    let mut work = u_minus.clone();
    let mut delta_tilde = BlockVector::zeros(&p);
    let mut delta = BlockVector::zeros(&p);
    let mut block_stats = Vec::new();
    let mut skipped = Vec::new();

    for i in (1..s).rev() {
        let r = block_rhs(sys, i, &work);
        let sol = sys.solve_block(i, &r, &u_minus.block_owned(i), inner_tol)?;
        if let Some(st) = sol.stats {
            block_stats.push((i, st));
        }
        work.set_block(i, &sol.x);
        delta_tilde.set_block(i, &sol.residual);
    }

    let tilde = work.clone();
    for i in 0..s {
        let r = block_rhs(sys, i, &work);
        if i > 0 && skip_factor > T::zero() {
            let cand = sys.apply_diag(i, &tilde.block_owned(i)) - &r;
            if cand.norm() <= skip_factor * inner_tol {
                delta.set_block(i, &cand);
                skipped.push(i);
                continue;
            }
        }
        let sol = sys.solve_block(i, &r, &tilde.block_owned(i), inner_tol)?;
        if let Some(st) = sol.stats {
            block_stats.push((i, st));
        }
        work.set_block(i, &sol.x);
        delta.set_block(i, &sol.residual);
    }
    delta_tilde.set_block(0, &delta.block_owned(0));

    Ok(SweepResult {
        u_plus: work,
        delta_tilde,
        delta,
        d: None,
        block_stats,
        skipped,
    })
}

/// A plain forward Gauss-Seidel pass (every block solved once, in order).
pub fn forward_sweep<T: Real, S: SweepSystem<T> + ?Sized>(
    sys: &mut S,
    u_minus: &BlockVector<T>,
    inner_tol: T,
) -> Result<SweepResult<T>> {
    let p = Arc::clone(sys.partition());
    let mut work = u_minus.clone();
    let mut delta = BlockVector::zeros(&p);
    let mut block_stats = Vec::new();
    for i in 0..p.num_blocks() {
        let r = block_rhs(sys, i, &work);
        let sol = sys.solve_block(i, &r, &u_minus.block_owned(i), inner_tol)?;
        if let Some(st) = sol.stats {
            block_stats.push((i, st));
        }
        work.set_block(i, &sol.x);
        delta.set_block(i, &sol.residual);
    }
    Ok(SweepResult {
        u_plus: work,
        delta_tilde: delta.clone(),
        delta,
        d: None,
        block_stats,
        skipped: Vec::new(),
    })
}

/// `d = delta + H_u H_d^{-1} (delta - delta_tilde)`.
pub fn assemble_error<T: Real>(
    delta_tilde: &BlockVector<T>,
    delta: &BlockVector<T>,
    h: &BlockOperator<T>,
) -> Result<BlockVector<T>> {
    check_first_blocks(delta_tilde, delta)?;
    let diff = delta.sub(delta_tilde);
    let w = h.diag_inv_apply(&diff)?;
    Ok(delta.add(&h.upper_apply(&w)))
}

/// `||H_d^{-1/2}(delta - delta_tilde)|| + ||H_d^{1/2}(H_d + H_u)^{-1} delta_tilde||`,
/// an upper bound for `||H_hat^{-1/2} d||`.
pub fn error_bound<T: Real>(delta_tilde: &BlockVector<T>, delta: &BlockVector<T>, h: &BlockOperator<T>) -> Result<T> {
    check_first_blocks(delta_tilde, delta)?;
    let diff = delta.sub(delta_tilde);
    let first = h.diag_inv_quadratic(&diff)?.max(T::zero()).sqrt();
    let w = h.upper_solve(delta_tilde)?;
    let second = h.diag_quadratic(&w).max(T::zero()).sqrt();
    Ok(first + second)
}

fn check_first_blocks<T: Real>(delta_tilde: &BlockVector<T>, delta: &BlockVector<T>) -> Result<()> {
    check_dim("error vector length", delta.data().len(), delta_tilde.data().len())?;
    if delta_tilde.block(0) != delta.block(0) {
        return Err(Error::Contract("first block of delta_tilde must equal first block of delta".into()));
    }
    Ok(())
}

/// `h(u) = 1/2 <u, H u> - <b, u>` with `theta` acting on block 0.
#[derive(Debug, Clone)]
pub struct QuadraticBlockObjective<T: Real> {
    pub h: BlockOperator<T>,
    pub b: BlockVector<T>,
    pub theta1: SimpleFunctionSpec<T>,
}

impl<T: Real> QuadraticBlockObjective<T> {
    pub fn new(h: BlockOperator<T>, b: BlockVector<T>, theta1: SimpleFunctionSpec<T>) -> Result<Self> {
        if h.partition().as_ref() != b.partition().as_ref() {
            return Err(Error::Structural("operator and right-hand side partitions differ".into()));
        }
        if !h.is_symmetric() {
            return Err(Error::Structural("operator is not self-adjoint".into()));
        }
        theta1.validate(h.partition().size(0))?;
        Ok(Self { h, b, theta1 })
    }

    /// Distance from zero to the subdifferential of
    /// `theta(u_1) + h(u) + 1/2 ||u - u_minus||^2_{sGS(H)} - <d, u>` at `u`.
    pub fn perturbed_stationarity(&self, u: &BlockVector<T>, u_minus: &BlockVector<T>, d: &BlockVector<T>) -> Result<T> {
        let g = self
            .h
            .apply(u)
            .sub(&self.b)
            .add(&sgs_operator_apply(&self.h, &u.sub(u_minus))?)
            .sub(d);
        let first = self.theta1.subdifferential_distance(
            &u.block_owned(0),
            &(-g.block_owned(0)),
            T::lit(1e-12),
        )?;
        let mut acc = first * first;
        for i in 1..g.partition().num_blocks() {
            acc += g.block(i).norm_squared();
        }
        Ok(acc.sqrt())
    }

    /// Dense minimizer of `h(u) + 1/2 ||u - u_minus||^2_{sGS(H)}` when `theta = 0`.
    pub fn dense_minimizer(&self, u_minus: &BlockVector<T>) -> Result<BlockVector<T>> {
        if !self.theta1.is_zero() {
            return Err(Error::Config("dense minimizer requires theta = 0".into()));
        }
        let hat = crate::blockops::hat_matrix(&self.h)?;
        let rhs = self.b.add(&sgs_operator_apply(&self.h, u_minus)?);
        let x = hat
            .cholesky()
            .ok_or_else(|| Error::Numerical("H_hat is not positive definite".into()))?
            .solve(rhs.data());
        BlockVector::from_data(self.h.partition(), x)
    }
}

/// How [`DenseSweep`] solves the smooth block systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerMode {
    /// Cached Cholesky of `H_ii`.
    Exact,
    /// Unpreconditioned CG stopped at absolute residual `tol`.
    Cg { maxit: usize },
}

/// [`SweepSystem`] over an explicit [`QuadraticBlockObjective`].
pub struct DenseSweep<'a, T: Real> {
    pub obj: &'a QuadraticBlockObjective<T>,
    pub mode: InnerMode,
}

impl<'a, T: Real> DenseSweep<'a, T> {
    pub fn new(obj: &'a QuadraticBlockObjective<T>, mode: InnerMode) -> Self {
        Self { obj, mode }
    }

    /// Runs a cycle and fills in `d` from the explicit operator.
    pub fn cycle(&mut self, u_minus: &BlockVector<T>, inner_tol: T, skip_factor: T) -> Result<SweepResult<T>> {
        let mut res = sgs_cycle(self, u_minus, inner_tol, skip_factor)?;
        res.d = Some(assemble_error(&res.delta_tilde, &res.delta, &self.obj.h)?);
        Ok(res)
    }
}

/// Diagonal of a block if it is diagonal.
pub(crate) fn diagonal_of<T: Real>(m: &nalgebra::DMatrix<T>) -> Option<DVector<T>> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j && m[(i, j)] != T::zero() {
                return None;
            }
        }
    }
    Some(m.diagonal())
}

impl<'a, T: Real> SweepSystem<T> for DenseSweep<'a, T> {
    fn partition(&self) -> &Arc<BlockPartition> {
        self.obj.h.partition()
    }

    fn rhs(&self, i: usize) -> DVector<T> {
        self.obj.b.block_owned(i)
    }

    fn coupling(&self, i: usize, u: &BlockVector<T>) -> DVector<T> {
        let p = self.obj.h.partition();
        let mut acc = DVector::zeros(p.size(i));
        for j in 0..p.num_blocks() {
            if j != i {
                acc += self.obj.h.block(i, j) * u.block(j);
            }
        }
        acc
    }

    fn apply_diag(&self, i: usize, v: &DVector<T>) -> DVector<T> {
        self.obj.h.block(i, i) * v
    }

    fn solve_block(&mut self, i: usize, r: &DVector<T>, warm: &DVector<T>, tol: T) -> Result<BlockSolve<T>> {
        if i == 0 && !self.obj.theta1.is_zero() {
            let hii = self.obj.h.block(0, 0).into_owned();
            let diag = diagonal_of(&hii).ok_or(Error::UnsupportedMetric {
                spec: self.obj.theta1.name(),
                metric: "dense",
            })?;
            let y = r.component_div(&diag);
            let x = prox_metric(&self.obj.theta1, &Metric::Diagonal(diag), &y)?;
            return Ok(BlockSolve::exact(x));
        }
        match self.mode {
            InnerMode::Exact => {
                let x = self.obj.h.diag_solve(i, r)?;
                let residual = self.apply_diag(i, &x) - r;
                Ok(BlockSolve { x, residual, stats: None })
            }
            InnerMode::Cg { maxit } => {
                let hii = self.obj.h.block(i, i).into_owned();
                let rel = tol / r.norm().max(T::one());
                let (x, st) = pcg_solve_from(|v: &DVector<T>| &hii * v, r, warm.clone(), |v: &DVector<T>| v.clone(), rel, maxit)?;
                let residual = &hii * &x - r;
                Ok(BlockSolve {
                    x,
                    residual,
                    stats: Some(st),
                })
            }
        }
    }
}
