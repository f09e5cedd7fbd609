//! Outer algorithms: the inexact majorized semi-proximal ADMM with general
//! semi-proximal terms, and its sGS realization where every block group is
//! handled by one symmetric Gauss-Seidel cycle.
//!
//! Problems are seen through [`CompositeProblem`]:
//!
//! ```text
//! min p(x) + f(x) + q(y) + g(y)   s.t.  A^* x + B^* y = c
//! ```
//!
//! with `p`, `q` acting on the first block of `x`, `y` and `f`, `g` smooth
//! with majorizing operators `Sigma_hat_f`, `Sigma_hat_g`.

mod config;
mod constants;
mod driver;
mod engine;
mod imspadmm;
mod problem;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub use config::{EpsSchedule, SigmaAdapt, SolverConfig, GOLDEN_RATIO};
pub use constants::{
    build_sgs_proximal, check_fg_pd, kappa_constants, sgs_proximal_of, steplength_constants, FgReport, SgsProximal,
    StepConstants,
};
pub use driver::{solve, IterateState, IterationLog, ResidualSample, SolveReport, StepInfo, Stepper};
pub use engine::{GroupSystem, SgsImsPadmm, AUDIT_FLOOR};
pub use imspadmm::{ExactLinearInner, ImsPadmm, InnerProblem, InnerSolver, ProxGradientInner};
pub use problem::{ProxTerm, QuadraticTerm, TwoBlockProblem};

use crate::blockops::{BlockOperator, BlockPartition, BlockVector};
use crate::error::{Error, Result};
use crate::prox::{prox_metric, Metric, SimpleFunctionSpec};
use crate::scalar::Real;
use crate::sgs::{diagonal_of, BlockSolve};
use crate::subsolve::{pcg_solve_from, CgStats};

/// Which block group of the problem an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    X,
    Y,
}

/// A linear operator shared between solvers.
pub type LinOp<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// Abstract two-group composite problem, accessed block by block.
///
/// For side `X` the linear map is `A`, for side `Y` it is `B`; the
/// `adjoint_block` method returns `A_i^* v` in the constraint space and
/// `map_block` returns `A_i z`.
pub trait CompositeProblem<T: Real> {
    fn partition(&self, side: Side) -> &Arc<BlockPartition>;

    fn z_dim(&self) -> usize;

    fn c(&self) -> &DVector<T>;

    /// Nonsmooth term on block `i`.
    fn block_spec(&self, side: Side, i: usize) -> &SimpleFunctionSpec<T>;

    /// Gradient of the smooth term.
    fn gradient(&self, side: Side, u: &BlockVector<T>) -> BlockVector<T>;

    /// `Sigma_hat_ij v`.
    fn majorizer_block(&self, side: Side, i: usize, j: usize, v: &DVector<T>) -> DVector<T>;

    /// `Sigma v` for the minorizing operator (zero unless overridden).
    fn minorizer_apply(&self, side: Side, u: &BlockVector<T>) -> BlockVector<T> {
        let _ = side;
        BlockVector::zeros(u.partition())
    }

    fn adjoint_block(&self, side: Side, i: usize, v: &DVector<T>) -> DVector<T>;

    fn map_block(&self, side: Side, i: usize, z: &DVector<T>) -> DVector<T>;

    /// Block semi-proximal term `S_tilde_i v` at penalty `sigma`.
    fn proximal_block(&self, side: Side, i: usize, v: &DVector<T>, sigma: T) -> DVector<T>;

    /// How block `i` is solved at penalty `sigma`. The default densifies the
    /// block and uses a diagonal prox (nonsmooth blocks) or Cholesky.
    fn block_recipe(&self, side: Side, i: usize, sigma: T) -> Result<BlockRecipe<T>> {
        dense_block_recipe(self, side, i, sigma)
    }

    /// Starting point: zero projected onto the domain of the nonsmooth terms.
    fn initial_point(&self, side: Side) -> Result<BlockVector<T>> {
        let p = self.partition(side);
        let mut u = BlockVector::zeros(p);
        for i in 0..p.num_blocks() {
            let proj = self.block_spec(side, i).project_domain(&u.block_owned(i))?;
            u.set_block(i, &proj);
        }
        Ok(u)
    }
}

/// `sum_i A_i^* u_i`.
pub fn adjoint_apply<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, u: &BlockVector<T>) -> DVector<T> {
    let mut acc = DVector::zeros(problem.z_dim());
    for i in 0..u.partition().num_blocks() {
        acc += problem.adjoint_block(side, i, &u.block_owned(i));
    }
    acc
}

/// `(A_1 z, ..., A_m z)`.
pub fn map_apply<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, z: &DVector<T>) -> BlockVector<T> {
    let p = problem.partition(side);
    let mut out = BlockVector::zeros(p);
    for i in 0..p.num_blocks() {
        out.set_block(i, &problem.map_block(side, i, z));
    }
    out
}

pub fn majorizer_apply<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, u: &BlockVector<T>) -> BlockVector<T> {
    let p = problem.partition(side);
    let mut out = BlockVector::zeros(p);
    for i in 0..p.num_blocks() {
        let mut acc = DVector::zeros(p.size(i));
        for j in 0..p.num_blocks() {
            acc += problem.majorizer_block(side, i, j, &u.block_owned(j));
        }
        out.set_block(i, &acc);
    }
    out
}

/// `Diag(S_tilde) u`.
pub fn proximal_apply<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    u: &BlockVector<T>,
    sigma: T,
) -> BlockVector<T> {
    let p = problem.partition(side);
    let mut out = BlockVector::zeros(p);
    for i in 0..p.num_blocks() {
        out.set_block(i, &problem.proximal_block(side, i, &u.block_owned(i), sigma));
    }
    out
}

/// `A^* x + B^* y - c`.
pub fn constraint_residual<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    x: &BlockVector<T>,
    y: &BlockVector<T>,
) -> DVector<T> {
    adjoint_apply(problem, Side::X, x) + adjoint_apply(problem, Side::Y, y) - problem.c()
}

/// `M_tilde_ii v = Sigma_hat_ii v + sigma A_i A_i^* v + S_tilde_i v`.
pub fn mtilde_block_apply<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    i: usize,
    v: &DVector<T>,
    sigma: T,
) -> DVector<T> {
    problem.majorizer_block(side, i, i, v)
        + problem.map_block(side, i, &problem.adjoint_block(side, i, v)) * sigma
        + problem.proximal_block(side, i, v, sigma)
}

/// `M_tilde u = Sigma_hat u + sigma A A^* u + Diag(S_tilde) u`.
pub fn mtilde_apply<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    u: &BlockVector<T>,
    sigma: T,
) -> BlockVector<T> {
    let az = adjoint_apply(problem, side, u);
    let mut out = majorizer_apply(problem, side, u);
    let aa = map_apply(problem, side, &az);
    *out.data_mut() += aa.data() * sigma;
    *out.data_mut() += proximal_apply(problem, side, u, sigma).data();
    out
}

fn probe<T: Real>(n: usize, f: impl Fn(&DVector<T>) -> DVector<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for k in 0..n {
        e[k] = T::one();
        out.set_column(k, &f(&e));
        e[k] = T::zero();
    }
    out
}

fn symmetrized<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    (&m + m.transpose()) * T::lit(0.5)
}

/// Dense `M_tilde` (or `N_tilde`) as a block operator.
pub fn dense_mtilde<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, sigma: T) -> Result<BlockOperator<T>> {
    let p = Arc::clone(problem.partition(side));
    let m = probe(p.total(), |e| {
        let u = BlockVector::from_data(&p, e.clone()).expect("probe length");
        mtilde_apply(problem, side, &u, sigma).into_data()
    });
    BlockOperator::new(symmetrized(m), &p)
}

/// Dense `Sigma_hat`.
pub fn dense_majorizer<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side) -> DMatrix<T> {
    let p = Arc::clone(problem.partition(side));
    symmetrized(probe(p.total(), |e| {
        let u = BlockVector::from_data(&p, e.clone()).expect("probe length");
        majorizer_apply(problem, side, &u).into_data()
    }))
}

/// Dense `Sigma` (minorizer).
pub fn dense_minorizer<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side) -> DMatrix<T> {
    let p = Arc::clone(problem.partition(side));
    symmetrized(probe(p.total(), |e| {
        let u = BlockVector::from_data(&p, e.clone()).expect("probe length");
        problem.minorizer_apply(side, &u).into_data()
    }))
}

/// Dense `A^*` as a `z_dim x dim` matrix.
pub fn dense_adjoint<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side) -> DMatrix<T> {
    let p = Arc::clone(problem.partition(side));
    let n = p.total();
    let mut out = DMatrix::zeros(problem.z_dim(), n);
    let mut e = DVector::zeros(n);
    for k in 0..n {
        e[k] = T::one();
        let u = BlockVector::from_data(&p, e.clone()).expect("probe length");
        out.set_column(k, &adjoint_apply(problem, side, &u));
        e[k] = T::zero();
    }
    out
}

/// Dense block-diagonal `Diag(S_tilde)`.
pub fn dense_proximal<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, sigma: T) -> DMatrix<T> {
    let p = Arc::clone(problem.partition(side));
    symmetrized(probe(p.total(), |e| {
        let u = BlockVector::from_data(&p, e.clone()).expect("probe length");
        proximal_apply(problem, side, &u, sigma).into_data()
    }))
}

/// How a single block subproblem `min theta_i(x) + 1/2 <x, H x> - <r, x>` is solved.
#[derive(Clone)]
pub enum BlockRecipe<T: Real> {
    /// `H` is diagonal; closed-form prox.
    Prox { spec: SimpleFunctionSpec<T>, diag: DVector<T> },
    /// Cached Cholesky of the dense block.
    Direct { matrix: DMatrix<T>, chol: Cholesky<T, Dyn> },
    /// Preconditioned CG stopped at the requested absolute residual.
    Pcg { apply: LinOp<T>, precond: LinOp<T>, maxit: usize },
    /// A closed-form inverse.
    ClosedForm { apply: LinOp<T>, inverse: LinOp<T> },
}

impl<T: Real> std::fmt::Debug for BlockRecipe<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockRecipe::Prox { spec, .. } => write!(f, "Prox({})", spec.name()),
            BlockRecipe::Direct { matrix, .. } => write!(f, "Direct({})", matrix.nrows()),
            BlockRecipe::Pcg { maxit, .. } => write!(f, "Pcg(maxit={maxit})"),
            BlockRecipe::ClosedForm { .. } => write!(f, "ClosedForm"),
        }
    }
}

/// Relative PCG tolerance floor.
pub const PCG_FLOOR: f64 = 1e-12;

impl<T: Real> BlockRecipe<T> {
    pub fn direct(matrix: DMatrix<T>, block: usize) -> Result<Self> {
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::SingularBlock { block })?;
        Ok(BlockRecipe::Direct { matrix, chol })
    }

    pub fn solve(&self, r: &DVector<T>, warm: &DVector<T>, tol: T) -> Result<BlockSolve<T>> {
        match self {
            BlockRecipe::Prox { spec, diag } => {
                let y = r.component_div(diag);
                if spec.is_zero() {
                    let residual = diag.component_mul(&y) - r;
                    return Ok(BlockSolve { x: y, residual, stats: None });
                }
                Ok(BlockSolve::exact(prox_metric(spec, &Metric::Diagonal(diag.clone()), &y)?))
            }
            BlockRecipe::Direct { matrix, chol } => {
                let x = chol.solve(r);
                let residual = matrix * &x - r;
                Ok(BlockSolve { x, residual, stats: None })
            }
            BlockRecipe::Pcg { apply, precond, maxit } => {
                let rel = (tol / r.norm().max(T::one())).max(T::lit(PCG_FLOOR));
                let (x, stats): (DVector<T>, CgStats<T>) =
                    pcg_solve_from(|v| apply(v), r, warm.clone(), |v| precond(v), rel, *maxit)?;
                let residual = apply(&x) - r;
                Ok(BlockSolve {
                    x,
                    residual,
                    stats: Some(stats),
                })
            }
            BlockRecipe::ClosedForm { apply, inverse } => {
                let x = inverse(r);
                let residual = apply(&x) - r;
                Ok(BlockSolve { x, residual, stats: None })
            }
        }
    }
}

/// Densifies `M_tilde_ii`; nonsmooth blocks need it to be diagonal.
pub fn dense_block_recipe<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    i: usize,
    sigma: T,
) -> Result<BlockRecipe<T>> {
    let n = problem.partition(side).size(i);
    let m = symmetrized(probe(n, |e| mtilde_block_apply(problem, side, i, e, sigma)));
    let spec = problem.block_spec(side, i);
    if !spec.is_zero() {
        let diag = diagonal_of(&m).ok_or(Error::UnsupportedMetric {
            spec: spec.name(),
            metric: "dense",
        })?;
        if diag.iter().any(|&d| d <= T::zero()) {
            return Err(Error::SingularBlock { block: i });
        }
        return Ok(BlockRecipe::Prox {
            spec: spec.clone(),
            diag,
        });
    }
    BlockRecipe::direct(m, i)
}
