use std::sync::Arc;

use nalgebra::DVector;

use super::driver::{IterateState, StepInfo, Stepper};
use super::{
    adjoint_apply, dense_mtilde, kappa_constants, majorizer_apply, map_apply, mtilde_block_apply, proximal_apply,
    steplength_constants, BlockRecipe, CompositeProblem, Side, SolverConfig,
};
use crate::blockops::{BlockOperator, BlockPartition, BlockVector};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sgs::{assemble_error, forward_sweep, sgs_cycle, BlockSolve, SweepResult, SweepSystem};

/// One block group (all of `x` or all of `y`) of the augmented Lagrangian
/// subproblem, seen as a block quadratic with operator `M_tilde`.
pub struct GroupSystem<'a, T: Real, P: CompositeProblem<T> + ?Sized> {
    pub problem: &'a P,
    pub side: Side,
    pub sigma: T,
    pub rhs: BlockVector<T>,
    pub solvers: &'a [BlockRecipe<T>],
}

impl<T: Real, P: CompositeProblem<T> + ?Sized> SweepSystem<T> for GroupSystem<'_, T, P> {
    fn partition(&self) -> &Arc<BlockPartition> {
        self.problem.partition(self.side)
    }

    fn rhs(&self, i: usize) -> DVector<T> {
        self.rhs.block_owned(i)
    }

    fn coupling(&self, i: usize, u: &BlockVector<T>) -> DVector<T> {
        let p = self.problem.partition(self.side);
        let mut acc = DVector::zeros(p.size(i));
        let mut az = DVector::zeros(self.problem.z_dim());
        for j in 0..p.num_blocks() {
            if j == i {
                continue;
            }
            let uj = u.block_owned(j);
            acc += self.problem.majorizer_block(self.side, i, j, &uj);
            az += self.problem.adjoint_block(self.side, j, &uj);
        }
        acc + self.problem.map_block(self.side, i, &az) * self.sigma
    }

    fn apply_diag(&self, i: usize, v: &DVector<T>) -> DVector<T> {
        mtilde_block_apply(self.problem, self.side, i, v, self.sigma)
    }

    fn solve_block(&mut self, i: usize, r: &DVector<T>, warm: &DVector<T>, tol: T) -> Result<BlockSolve<T>> {
        self.solvers[i].solve(r, warm, tol)
    }
}

struct Audit<T: Real> {
    m: BlockOperator<T>,
    n: BlockOperator<T>,
    kappa_x: T,
    kappa_y: T,
}

/// Relative floor for certificate bounds, covering roundoff of exact solves.
pub const AUDIT_FLOOR: f64 = 1e-10;

/// The sGS-based inexact majorized semi-proximal ADMM: each group update is
/// one sGS cycle over its blocks.
pub struct SgsImsPadmm<'a, T: Real, P: CompositeProblem<T> + ?Sized> {
    problem: &'a P,
    sigma: T,
    tau: T,
    skip: T,
    audit_on: bool,
    x_recipes: Vec<BlockRecipe<T>>,
    y_recipes: Vec<BlockRecipe<T>>,
    audit: Option<Audit<T>>,
    single_pass: bool,
    last: Option<(SweepResult<T>, SweepResult<T>)>,
}

fn recipes<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, sigma: T) -> Result<Vec<BlockRecipe<T>>> {
    (0..problem.partition(side).num_blocks())
        .map(|i| problem.block_recipe(side, i, sigma))
        .collect()
}

fn group_rhs<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    u: &BlockVector<T>,
    w: &DVector<T>,
    sigma: T,
) -> BlockVector<T> {
    let mut b = majorizer_apply(problem, side, u);
    *b.data_mut() += proximal_apply(problem, side, u, sigma).data();
    *b.data_mut() -= problem.gradient(side, u).data();
    *b.data_mut() -= map_apply(problem, side, w).data();
    b
}

impl<'a, T: Real, P: CompositeProblem<T> + ?Sized> SgsImsPadmm<'a, T, P> {
    pub fn new(problem: &'a P, config: &SolverConfig<T>) -> Result<Self> {
        Self::build(problem, config, false)
    }

    /// Baseline mode: one forward Gauss-Seidel pass per group with exact
    /// block solves and no certificate audit (the directly extended ADMM).
    /// Nonsmooth terms may sit on any block.
    pub fn directly_extended(problem: &'a P, config: &SolverConfig<T>) -> Result<Self> {
        let mut cfg = config.clone();
        cfg.audit = false;
        Self::build(problem, &cfg, true)
    }

    fn build(problem: &'a P, config: &SolverConfig<T>, single_pass: bool) -> Result<Self> {
        config.validate()?;
        if !config.unsafe_tau {
            steplength_constants(config.tau)?;
        }
        for side in [Side::X, Side::Y] {
            for i in 1..problem.partition(side).num_blocks() {
                if single_pass {
                    break;
                }
                let spec = problem.block_spec(side, i);
                if !spec.is_zero() {
                    return Err(Error::InvalidSpec(format!(
                        "nonsmooth term {} on block {i} of {side:?}; only the first block may carry one",
                        spec.name()
                    )));
                }
            }
        }
        let mut out = Self {
            problem,
            sigma: config.sigma,
            tau: config.tau,
            skip: config.skip_factor,
            audit_on: config.audit,
            x_recipes: Vec::new(),
            y_recipes: Vec::new(),
            audit: None,
            single_pass,
            last: None,
        };
        out.rebuild()?;
        Ok(out)
    }

    fn rebuild(&mut self) -> Result<()> {
        self.x_recipes = recipes(self.problem, Side::X, self.sigma)?;
        self.y_recipes = recipes(self.problem, Side::Y, self.sigma)?;
        self.audit = if self.audit_on {
            let m = dense_mtilde(self.problem, Side::X, self.sigma)?;
            let n = dense_mtilde(self.problem, Side::Y, self.sigma)?;
            m.check_diagonal_definite()?;
            n.check_diagonal_definite()?;
            Some(Audit {
                kappa_x: kappa_constants(&m)?,
                kappa_y: kappa_constants(&n)?,
                m,
                n,
            })
        } else {
            None
        };
        Ok(())
    }

    pub fn recipes(&self, side: Side) -> &[BlockRecipe<T>] {
        match side {
            Side::X => &self.x_recipes,
            Side::Y => &self.y_recipes,
        }
    }

    /// `(kappa, kappa')` when auditing.
    pub fn kappas(&self) -> Option<(T, T)> {
        self.audit.as_ref().map(|a| (a.kappa_x, a.kappa_y))
    }

    /// Sweeps of the most recent step, `d` filled in when auditing.
    pub fn last_sweeps(&self) -> Option<&(SweepResult<T>, SweepResult<T>)> {
        self.last.as_ref()
    }

    fn cycle(&self, side: Side, u: &BlockVector<T>, w: &DVector<T>, eps: T) -> Result<SweepResult<T>> {
        let rhs = group_rhs(self.problem, side, u, w, self.sigma);
        let mut sys = GroupSystem {
            problem: self.problem,
            side,
            sigma: self.sigma,
            rhs,
            solvers: self.recipes(side),
        };
        if self.single_pass {
            forward_sweep(&mut sys, u, eps)
        } else {
            sgs_cycle(&mut sys, u, eps, self.skip)
        }
    }

    fn certify(&self, res: &mut SweepResult<T>, side: Side, eps: T, k: usize) -> Result<(f64, f64)> {
        let Some(audit) = &self.audit else {
            return Ok((f64::NAN, f64::NAN));
        };
        let (op, kappa, which) = match side {
            Side::X => (&audit.m, audit.kappa_x, "dx certificate"),
            Side::Y => (&audit.n, audit.kappa_y, "dy certificate"),
        };
        let d = assemble_error(&res.delta_tilde, &res.delta, op)?;
        let cert = op.hat_inv_sqrt_norm(&d)?.to_f64_lossy();
        let scale = res.u_plus.norm().to_f64_lossy().max(1.0) * op.matrix().amax().to_f64_lossy().max(1.0);
        let eff = eps.to_f64_lossy() * self.skip.to_f64_lossy().max(1.0);
        let bound = kappa.to_f64_lossy() * eff.max(AUDIT_FLOOR * scale);
        res.d = Some(d);
        if !(cert <= bound) {
            return Err(Error::Certificate {
                iteration: k,
                which,
                value: cert,
                bound,
            });
        }
        Ok((cert, bound))
    }
}

impl<T: Real, P: CompositeProblem<T> + ?Sized> Stepper<T> for SgsImsPadmm<'_, T, P> {
    fn name(&self) -> &'static str {
        if self.single_pass {
            "spadmm-direct"
        } else {
            "sgs-imspadmm"
        }
    }

    fn step(&mut self, state: &mut IterateState<T>, eps: T) -> Result<StepInfo> {
        let p = self.problem;
        let sigma = self.sigma;
        let c = p.c();
        let k = state.k;

        let by = adjoint_apply(p, Side::Y, &state.y);
        let w = &state.z + (&by - c) * sigma;
        let mut xs = self.cycle(Side::X, &state.x, &w, eps)?;
        let ax = adjoint_apply(p, Side::X, &xs.u_plus);

        let w = &state.z + (&ax - c) * sigma;
        let mut ys = self.cycle(Side::Y, &state.y, &w, eps)?;
        let by = adjoint_apply(p, Side::Y, &ys.u_plus);

        let (dx_cert, dx_bound) = self.certify(&mut xs, Side::X, eps, k)?;
        let (dy_cert, dy_bound) = self.certify(&mut ys, Side::Y, eps, k)?;

        let r = ax + by - c;
        state.z += &r * (self.tau * sigma);
        let dy_norm = ys.u_plus.sub(&state.y).norm().to_f64_lossy();
        state.x = xs.u_plus.clone();
        state.y = ys.u_plus.clone();
        state.r = r;
        state.k += 1;

        let mut block_pcg: Vec<(usize, usize)> = Vec::new();
        for (offset, sw) in [(0, &xs), (p.partition(Side::X).num_blocks(), &ys)] {
            for (i, st) in &sw.block_stats {
                match block_pcg.iter_mut().find(|(b, _)| *b == offset + i) {
                    Some(e) => e.1 += st.iterations,
                    None => block_pcg.push((offset + i, st.iterations)),
                }
            }
        }
        let info = StepInfo {
            eps: eps.to_f64_lossy(),
            dx_cert,
            dy_cert,
            dx_bound,
            dy_bound,
            pcg_iters: xs.pcg_iterations() + ys.pcg_iterations(),
            block_pcg,
            skipped: xs.skipped.len() + ys.skipped.len(),
            audited: self.audit.is_some(),
            dy_norm,
        };
        self.last = Some((xs, ys));
        Ok(info)
    }

    fn sigma(&self) -> T {
        self.sigma
    }

    fn set_sigma(&mut self, sigma: T) -> Result<()> {
        if !(sigma > T::zero()) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        self.sigma = sigma;
        self.rebuild()
    }

    fn tau(&self) -> T {
        self.tau
    }
}
