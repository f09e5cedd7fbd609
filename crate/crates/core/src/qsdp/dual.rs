use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{apply_q_svec, q_matrix, scaling_matrix, QsdpProblem};
use crate::admm::{BlockRecipe, CompositeProblem, IterateState, LinOp, Side};
use crate::blockops::{BlockPartition, BlockVector};
use crate::error::{check_dim, Error, Result};
use crate::prox::SimpleFunctionSpec;
use crate::scalar::Real;
use crate::subsolve::{dependent_rows, sorted_eigen, TruncatedEigProx};
use crate::svec::{smat, svec};

/// How the dual is split into blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `x = ((Z, v), W)`, `y = (S, y_E, y_I)` with the scaled slack
    /// constraint `alpha (v - y_I) = 0`; only the first block of each group is
    /// nonsmooth.
    Slack,
    /// `x = (Z, W)`, `y = (S, y_E, y_I)` with `y_I >= 0` on its own block and
    /// the linearizing proximal term `lambda_max I - sigma A_I A_I^*`; for
    /// the directly extended ADMM.
    Direct,
}

/// Solver for the `W` block `(Q + sigma Q^2 + s I) W = R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WSolver {
    /// PCG preconditioned by the leading eigenpairs of `Q`.
    #[default]
    Pcg,
    /// Full eigen-decomposition of `Q`.
    Eigen,
    /// Eigen-decomposition of the Lyapunov operand; falls back to
    /// [`WSolver::Pcg`] for other kinds of `Q`.
    Lyapunov,
}

/// A point of the dual together with the multipliers `X` and `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualIterate<T: Real> {
    pub z: DMatrix<T>,
    pub v: DVector<T>,
    pub w: DMatrix<T>,
    pub s: DMatrix<T>,
    pub y_e: DVector<T>,
    pub y_i: DVector<T>,
    pub x: DMatrix<T>,
    pub u: DVector<T>,
}

impl<T: Real> DualIterate<T> {
    pub fn zeros(n: usize, m_e: usize, m_i: usize) -> Self {
        Self {
            z: DMatrix::zeros(n, n),
            v: DVector::zeros(m_i),
            w: DMatrix::zeros(n, n),
            s: DMatrix::zeros(n, n),
            y_e: DVector::zeros(m_e),
            y_i: DVector::zeros(m_i),
            x: DMatrix::zeros(n, n),
            u: DVector::zeros(m_i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    ZV,
    W,
    S,
    YE,
    YI,
}

/// The dual of a [`QsdpProblem`] arranged as a [`CompositeProblem`].
pub struct QsdpDual<T: Real> {
    problem: Arc<QsdpProblem<T>>,
    formulation: Formulation,
    w_solver: WSolver,
    precond_rank: usize,
    alpha: T,
    nv: usize,
    x_part: Arc<BlockPartition>,
    y_part: Arc<BlockPartition>,
    x_roles: Vec<Role>,
    y_roles: Vec<Role>,
    x_specs: Vec<SimpleFunctionSpec<T>>,
    y_specs: Vec<SimpleFunctionSpec<T>>,
    c: DVector<T>,
    grad_y: Vec<DVector<T>>,
    w_shift: T,
    q_eigen: Option<(Vec<T>, DMatrix<T>)>,
    lyapunov: Option<(DVector<T>, DMatrix<T>)>,
    gram_e: DMatrix<T>,
    gram_i: DMatrix<T>,
    gram_i_eigen: Option<(Vec<T>, DMatrix<T>)>,
}

fn partition(sizes: &[usize]) -> Result<Arc<BlockPartition>> {
    Ok(Arc::new(BlockPartition::new(sizes.to_vec())?))
}

impl<T: Real> QsdpDual<T> {
    pub fn new(problem: Arc<QsdpProblem<T>>, formulation: Formulation) -> Result<Self> {
        Self::with_options(problem, formulation, WSolver::default(), crate::subsolve::DEFAULT_RANK)
    }

    pub fn with_options(
        problem: Arc<QsdpProblem<T>>,
        formulation: Formulation,
        w_solver: WSolver,
        precond_rank: usize,
    ) -> Result<Self> {
        let p = &*problem;
        let nv = p.svec_dim();
        let (me, mi) = (p.m_e(), p.m_i());
        if me > 0 {
            let dep = dependent_rows(&p.a_e.dense());
            if !dep.is_empty() {
                return Err(Error::RankDeficient { rows: dep });
            }
        }
        let alpha = match formulation {
            Formulation::Slack => scaling_matrix(&p.a_i),
            Formulation::Direct => T::one(),
        };
        let (lo, hi) = p.set.svec_bounds();
        let support = SimpleFunctionSpec::SupportOfBox { lower: lo, upper: hi };

        let mut x_roles = Vec::new();
        let mut x_sizes = Vec::new();
        let mut x_specs = Vec::new();
        match formulation {
            Formulation::Slack if mi > 0 => {
                x_sizes.push(nv + mi);
                x_specs.push(SimpleFunctionSpec::Product(vec![(nv, support), (mi, SimpleFunctionSpec::Nonneg)]));
            }
            _ => {
                x_sizes.push(nv);
                x_specs.push(support);
            }
        }
        x_roles.push(Role::ZV);
        if !p.q_is_vacuous() {
            x_roles.push(Role::W);
            x_sizes.push(nv);
            x_specs.push(SimpleFunctionSpec::Zero);
        }

        let mut y_roles = vec![Role::S];
        let mut y_sizes = vec![nv];
        let mut y_specs = vec![SimpleFunctionSpec::PsdCone { n: p.n }];
        let mut grad_y = vec![DVector::zeros(nv)];
        if me > 0 {
            y_roles.push(Role::YE);
            y_sizes.push(me);
            y_specs.push(SimpleFunctionSpec::Zero);
            grad_y.push(-&p.b_e);
        }
        if mi > 0 {
            y_roles.push(Role::YI);
            y_sizes.push(mi);
            y_specs.push(match formulation {
                Formulation::Slack => SimpleFunctionSpec::Zero,
                Formulation::Direct => SimpleFunctionSpec::Nonneg,
            });
            grad_y.push(-&p.b_i);
        }

        let zdim = match formulation {
            Formulation::Slack => nv + mi,
            Formulation::Direct => nv,
        };
        let mut c = DVector::zeros(zdim);
        c.rows_mut(0, nv).copy_from(&p.c_svec());

        let mut w_shift = T::zero();
        let mut q_eigen = None;
        let mut lyapunov = None;
        if !p.q_is_vacuous() {
            let (vals, vecs) = sorted_eigen(&q_matrix(&p.q, p.n));
            let lmax = vals[0].max(T::zero());
            let lmin = vals[vals.len() - 1];
            if lmin < T::lit(1e-8) * lmax || lmax == T::zero() {
                w_shift = T::lit(1e-8) * lmax.max(T::one());
            }
            q_eigen = Some((vals, vecs));
            if w_solver == WSolver::Lyapunov {
                lyapunov = p.q.lyapunov_eigen();
            }
        }
        let gram_e = p.a_e.gram();
        let gram_i = p.a_i.gram();
        let gram_i_eigen = (mi > 0).then(|| {
            let v = &gram_i + DMatrix::identity(mi, mi) * (alpha * alpha);
            match formulation {
                Formulation::Slack => sorted_eigen(&v),
                Formulation::Direct => sorted_eigen(&gram_i),
            }
        });

        Ok(Self {
            formulation,
            w_solver,
            precond_rank,
            alpha,
            nv,
            x_part: partition(&x_sizes)?,
            y_part: partition(&y_sizes)?,
            x_roles,
            y_roles,
            x_specs,
            y_specs,
            c,
            grad_y,
            w_shift,
            q_eigen,
            lyapunov,
            gram_e,
            gram_i,
            gram_i_eigen,
            problem,
        })
    }

    pub fn problem(&self) -> &QsdpProblem<T> {
        &self.problem
    }

    pub fn shared_problem(&self) -> &Arc<QsdpProblem<T>> {
        &self.problem
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    /// Scaling `alpha` of `D = alpha I`.
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Shift `s` of the `W` block proximal term `s I` (zero unless `Q` is
    /// singular).
    pub fn w_shift(&self) -> T {
        self.w_shift
    }

    fn roles(&self, side: Side) -> &[Role] {
        match side {
            Side::X => &self.x_roles,
            Side::Y => &self.y_roles,
        }
    }

    fn find(&self, side: Side, role: Role) -> Option<usize> {
        self.roles(side).iter().position(|&r| r == role)
    }

    fn n(&self) -> usize {
        self.problem.n
    }

    fn mi(&self) -> usize {
        self.problem.m_i()
    }

    fn slack(&self) -> bool {
        self.formulation == Formulation::Slack && self.mi() > 0
    }

    fn q(&self, v: &DVector<T>) -> DVector<T> {
        apply_q_svec(&self.problem.q, v, self.n())
    }

    /// `lambda_max(sigma A_I A_I^*)` used by the linearized `y_I` block.
    fn linearize_weight(&self, sigma: T) -> T {
        match &self.gram_i_eigen {
            Some((vals, _)) => vals[0].max(T::zero()) * sigma,
            None => T::zero(),
        }
    }

    fn w_recipe(&self, sigma: T) -> Result<BlockRecipe<T>> {
        let n = self.n();
        let q = self.problem.q.clone();
        let s = self.w_shift;
        let apply_q = {
            let q = q.clone();
            move |v: &DVector<T>| apply_q_svec(&q, v, n)
        };
        let apply: LinOp<T> = {
            let f = apply_q.clone();
            Arc::new(move |v: &DVector<T>| {
                let qv = f(v);
                let qqv = f(&qv);
                qv + qqv * sigma + v * s
            })
        };
        let mu = move |l: T| l + sigma * l * l + s;
        if let (WSolver::Lyapunov, Some((lam, u))) = (self.w_solver, &self.lyapunov) {
            let (lam, u) = (lam.clone(), u.clone());
            let inverse: LinOp<T> = Arc::new(move |r: &DVector<T>| {
                let rm = smat(r, n).expect("svec length");
                let mut t = u.transpose() * rm * &u;
                for j in 0..n {
                    for i in 0..n {
                        let m = (lam[i] + lam[j]) * T::lit(0.5);
                        t[(i, j)] /= mu(m);
                    }
                }
                svec(&(&u * t * u.transpose()))
            });
            return Ok(BlockRecipe::ClosedForm { apply, inverse });
        }
        let (vals, vecs) = self.q_eigen.as_ref().expect("W block implies Q is present");
        let mus: Vec<T> = vals.iter().map(|&l| mu(l)).collect();
        if mus.iter().any(|&m| m <= T::zero()) {
            return Err(Error::SingularBlock { block: 1 });
        }
        if self.w_solver == WSolver::Eigen {
            let (mus, vecs) = (mus.clone(), vecs.clone());
            let inverse: LinOp<T> = Arc::new(move |r: &DVector<T>| {
                let mut c = vecs.tr_mul(r);
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck /= mus[k];
                }
                &vecs * c
            });
            return Ok(BlockRecipe::ClosedForm { apply, inverse });
        }
        let dim = self.nv;
        let l = self.precond_rank.min(dim - 1);
        let system = vecs * DMatrix::from_diagonal(&DVector::from_vec(mus.clone())) * vecs.transpose();
        let pre = TruncatedEigProx::from_eigen(system, &mus, vecs, l, T::one())?;
        let precond: LinOp<T> = Arc::new(move |r: &DVector<T>| pre.apply_inverse(r));
        Ok(BlockRecipe::Pcg {
            apply,
            precond,
            maxit: 10 * dim,
        })
    }

    fn yi_recipe(&self, sigma: T) -> Result<BlockRecipe<T>> {
        let mi = self.mi();
        if self.formulation == Formulation::Direct {
            return Ok(BlockRecipe::Prox {
                spec: SimpleFunctionSpec::Nonneg,
                diag: DVector::from_element(mi, self.linearize_weight(sigma)),
            });
        }
        let a_i = self.problem.a_i.clone();
        let a2 = self.alpha * self.alpha;
        let apply: LinOp<T> = Arc::new(move |v: &DVector<T>| (a_i.apply(&a_i.adjoint(v)) + v * a2) * sigma);
        let (vals, vecs) = self.gram_i_eigen.as_ref().expect("y_I block implies inequalities");
        let v = &self.gram_i + DMatrix::identity(mi, mi) * a2;
        let l = self.precond_rank.min(mi - 1);
        let pre = TruncatedEigProx::from_eigen(v, vals, vecs, l, sigma)?;
        let precond: LinOp<T> = Arc::new(move |r: &DVector<T>| pre.apply_inverse(r));
        Ok(BlockRecipe::Pcg {
            apply,
            precond,
            maxit: 10 * mi,
        })
    }

    /// Splits an ADMM state into the named dual variables and multipliers.
    pub fn iterate(&self, state: &IterateState<T>) -> Result<DualIterate<T>> {
        let p = &*self.problem;
        let (n, nv, mi) = (p.n, self.nv, self.mi());
        let zv = state.x.block_owned(0);
        let z = smat(&zv.rows(0, nv).into_owned(), n)?;
        let w = match self.find(Side::X, Role::W) {
            Some(i) => smat(&state.x.block_owned(i), n)?,
            None => DMatrix::zeros(n, n),
        };
        let s = smat(&state.y.block_owned(0), n)?;
        let y_e = match self.find(Side::Y, Role::YE) {
            Some(i) => state.y.block_owned(i),
            None => DVector::zeros(0),
        };
        let y_i = match self.find(Side::Y, Role::YI) {
            Some(i) => state.y.block_owned(i),
            None => DVector::zeros(0),
        };
        let x = smat(&state.z.rows(0, nv).into_owned(), n)?;
        let (v, u) = if self.slack() {
            (zv.rows(nv, mi).into_owned(), state.z.rows(nv, mi).into_owned())
        } else {
            (y_i.clone(), p.a_i.apply_matrix(&x) - &p.b_i)
        };
        Ok(DualIterate {
            z,
            v,
            w,
            s,
            y_e,
            y_i,
            x,
            u,
        })
    }

    /// Packs named dual variables into an ADMM state.
    pub fn state(&self, it: &DualIterate<T>) -> Result<IterateState<T>> {
        let p = &*self.problem;
        let (nv, mi) = (self.nv, self.mi());
        check_dim("Z order", p.n, it.z.nrows())?;
        check_dim("y_E length", p.m_e(), it.y_e.len())?;
        check_dim("y_I length", mi, it.y_i.len())?;
        let mut x = BlockVector::zeros(&self.x_part);
        let mut zv = DVector::zeros(self.x_part.size(0));
        zv.rows_mut(0, nv).copy_from(&svec(&it.z));
        if self.slack() {
            check_dim("v length", mi, it.v.len())?;
            zv.rows_mut(nv, mi).copy_from(&it.v);
        }
        x.set_block(0, &zv);
        if let Some(i) = self.find(Side::X, Role::W) {
            x.set_block(i, &svec(&it.w));
        }
        let mut y = BlockVector::zeros(&self.y_part);
        y.set_block(0, &svec(&it.s));
        if let Some(i) = self.find(Side::Y, Role::YE) {
            y.set_block(i, &it.y_e);
        }
        if let Some(i) = self.find(Side::Y, Role::YI) {
            y.set_block(i, &it.y_i);
        }
        let mut z = DVector::zeros(self.c.len());
        z.rows_mut(0, nv).copy_from(&svec(&it.x));
        if self.slack() {
            check_dim("u length", mi, it.u.len())?;
            z.rows_mut(nv, mi).copy_from(&it.u);
        }
        IterateState::from_parts(self, x, y, z)
    }
}

impl<T: Real> CompositeProblem<T> for QsdpDual<T> {
    fn partition(&self, side: Side) -> &Arc<BlockPartition> {
        match side {
            Side::X => &self.x_part,
            Side::Y => &self.y_part,
        }
    }

    fn z_dim(&self) -> usize {
        self.c.len()
    }

    fn c(&self) -> &DVector<T> {
        &self.c
    }

    fn block_spec(&self, side: Side, i: usize) -> &SimpleFunctionSpec<T> {
        match side {
            Side::X => &self.x_specs[i],
            Side::Y => &self.y_specs[i],
        }
    }

    fn gradient(&self, side: Side, u: &BlockVector<T>) -> BlockVector<T> {
        let mut out = BlockVector::zeros(u.partition());
        match side {
            Side::X => {
                if let Some(i) = self.find(Side::X, Role::W) {
                    out.set_block(i, &self.q(&u.block_owned(i)));
                }
            }
            Side::Y => {
                for (i, g) in self.grad_y.iter().enumerate() {
                    out.set_block(i, g);
                }
            }
        }
        out
    }

    fn majorizer_block(&self, side: Side, i: usize, j: usize, v: &DVector<T>) -> DVector<T> {
        let size = self.partition(side).size(i);
        if side == Side::X && i == j && self.x_roles[i] == Role::W {
            return self.q(v);
        }
        DVector::zeros(size)
    }

    fn minorizer_apply(&self, side: Side, u: &BlockVector<T>) -> BlockVector<T> {
        match side {
            Side::X => self.gradient(side, u),
            Side::Y => BlockVector::zeros(u.partition()),
        }
    }

    fn adjoint_block(&self, side: Side, i: usize, v: &DVector<T>) -> DVector<T> {
        let p = &*self.problem;
        let nv = self.nv;
        let mut out = DVector::zeros(self.c.len());
        match self.roles(side)[i] {
            Role::ZV => {
                out.rows_mut(0, nv).copy_from(&v.rows(0, nv));
                if self.slack() {
                    out.rows_mut(nv, self.mi()).copy_from(&(v.rows(nv, self.mi()) * self.alpha));
                }
            }
            Role::W => out.rows_mut(0, nv).copy_from(&(-self.q(v))),
            Role::S => out.rows_mut(0, nv).copy_from(v),
            Role::YE => out.rows_mut(0, nv).copy_from(&p.a_e.adjoint(v)),
            Role::YI => {
                out.rows_mut(0, nv).copy_from(&p.a_i.adjoint(v));
                if self.slack() {
                    out.rows_mut(nv, self.mi()).copy_from(&(v * -self.alpha));
                }
            }
        }
        out
    }

    fn map_block(&self, side: Side, i: usize, z: &DVector<T>) -> DVector<T> {
        let p = &*self.problem;
        let nv = self.nv;
        let z1 = z.rows(0, nv).into_owned();
        match self.roles(side)[i] {
            Role::ZV => {
                if self.slack() {
                    let mut out = DVector::zeros(nv + self.mi());
                    out.rows_mut(0, nv).copy_from(&z1);
                    out.rows_mut(nv, self.mi()).copy_from(&(z.rows(nv, self.mi()) * self.alpha));
                    out
                } else {
                    z1
                }
            }
            Role::W => -self.q(&z1),
            Role::S => z1,
            Role::YE => p.a_e.apply(&z1),
            Role::YI => {
                let mut out = p.a_i.apply(&z1);
                if self.slack() {
                    out -= z.rows(nv, self.mi()) * self.alpha;
                }
                out
            }
        }
    }

    fn proximal_block(&self, side: Side, i: usize, v: &DVector<T>, sigma: T) -> DVector<T> {
        match self.roles(side)[i] {
            Role::W => v * self.w_shift,
            Role::YI if self.formulation == Formulation::Direct => {
                v * self.linearize_weight(sigma) - &self.gram_i * v * sigma
            }
            _ => DVector::zeros(v.len()),
        }
    }

    fn block_recipe(&self, side: Side, i: usize, sigma: T) -> Result<BlockRecipe<T>> {
        let size = self.partition(side).size(i);
        match self.roles(side)[i] {
            Role::ZV => {
                let mut diag = DVector::from_element(size, sigma);
                if self.slack() {
                    diag.rows_mut(self.nv, self.mi()).fill(sigma * self.alpha * self.alpha);
                }
                Ok(BlockRecipe::Prox {
                    spec: self.x_specs[i].clone(),
                    diag,
                })
            }
            Role::W => self.w_recipe(sigma),
            Role::S => Ok(BlockRecipe::Prox {
                spec: self.y_specs[i].clone(),
                diag: DVector::from_element(size, sigma),
            }),
            Role::YE => BlockRecipe::direct(&self.gram_e * sigma, i),
            Role::YI => self.yi_recipe(sigma),
        }
    }
}
