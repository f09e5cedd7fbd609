use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::driver::{IterateState, StepInfo, Stepper};
use super::{
    adjoint_apply, dense_adjoint, dense_majorizer, steplength_constants, CompositeProblem, Side, SolverConfig,
};
use crate::blockops::BlockVector;
use crate::error::{check_dim, Error, Result};
use crate::prox::{prox_metric, Metric, SimpleFunctionSpec};
use crate::scalar::Real;

/// `min theta(x) + 1/2 <x, M x> - <b, x>` handed to an [`InnerSolver`].
pub struct InnerProblem<'a, T: Real> {
    pub theta: &'a SimpleFunctionSpec<T>,
    pub m: &'a DMatrix<T>,
    pub chol: &'a Cholesky<T, Dyn>,
    pub lmax: T,
    pub b: &'a DVector<T>,
}

impl<T: Real> InnerProblem<'_, T> {
    /// `||M^{-1/2} d||`.
    pub fn dual_norm(&self, d: &DVector<T>) -> T {
        let l = self.chol.l();
        let w = l.solve_lower_triangular(d).expect("Cholesky factor is invertible");
        w.norm()
    }
}

/// Approximate subproblem solver returning `x` and a certificate
/// `d in partial theta(x) + M x - b` with `||M^{-1/2} d|| <= eps`.
pub trait InnerSolver<T: Real> {
    fn solve(&mut self, prob: &InnerProblem<'_, T>, warm: &DVector<T>, eps: T) -> Result<(DVector<T>, DVector<T>)>;
}

/// Exact Cholesky solve; only for `theta = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactLinearInner;

impl<T: Real> InnerSolver<T> for ExactLinearInner {
    fn solve(&mut self, prob: &InnerProblem<'_, T>, _warm: &DVector<T>, _eps: T) -> Result<(DVector<T>, DVector<T>)> {
        if !prob.theta.is_zero() {
            return Err(Error::UnsupportedMetric {
                spec: prob.theta.name(),
                metric: "dense",
            });
        }
        let x = prob.chol.solve(prob.b);
        let d = prob.m * &x - prob.b;
        Ok((x, d))
    }
}

/// Accelerated proximal gradient with adaptive restart, stopped on the
/// certificate `||M^{-1/2} d|| <= max(eps, floor)`.
#[derive(Debug, Clone)]
pub struct ProxGradientInner<T> {
    pub max_iter: usize,
    pub floor: T,
    pub last_iterations: usize,
}

impl<T: Real> ProxGradientInner<T> {
    pub fn new(max_iter: usize, floor: T) -> Self {
        Self {
            max_iter,
            floor,
            last_iterations: 0,
        }
    }
}

impl<T: Real> InnerSolver<T> for ProxGradientInner<T> {
    fn solve(&mut self, prob: &InnerProblem<'_, T>, warm: &DVector<T>, eps: T) -> Result<(DVector<T>, DVector<T>)> {
        let target = eps.max(self.floor);
        let l = prob.lmax;
        let metric = Metric::Scalar(l);
        let mut x = prob.theta.project_domain(warm)?;
        let mut y = x.clone();
        let mut t = T::one();
        let mut best: Option<(T, DVector<T>, DVector<T>)> = None;
        for it in 0..self.max_iter {
            let gy = prob.m * &y - prob.b;
            let xn = prox_metric(prob.theta, &metric, &(&y - &gy / l))?;
            let d = (&y - &xn) * l - &gy + (prob.m * &xn - prob.b);
            let cert = prob.dual_norm(&d);
            if best.as_ref().is_none_or(|(c, _, _)| cert < *c) {
                best = Some((cert, xn.clone(), d.clone()));
            }
            if cert <= target {
                self.last_iterations = it + 1;
                return Ok((xn, d));
            }
            let restart = (&y - &xn).dot(&(&xn - &x)) > T::zero();
            if restart {
                t = T::one();
                y = xn.clone();
            } else {
                let tn = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
                y = &xn + (&xn - &x) * ((t - T::one()) / tn);
                t = tn;
            }
            x = xn;
        }
        self.last_iterations = self.max_iter;
        let (cert, x, d) = best.expect("at least one iteration");
        log::warn!("proximal gradient stopped at certificate {:e} > {:e}", cert.to_f64_lossy(), target.to_f64_lossy());
        Ok((x, d))
    }
}

struct SideData<T: Real> {
    theta: SimpleFunctionSpec<T>,
    sigma_hat: DMatrix<T>,
    adj: DMatrix<T>,
    prox: DMatrix<T>,
    m: DMatrix<T>,
    chol: Cholesky<T, Dyn>,
    lmax: T,
}

fn full_spec<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side) -> SimpleFunctionSpec<T> {
    let part = problem.partition(side);
    let parts: Vec<(usize, SimpleFunctionSpec<T>)> = (0..part.num_blocks())
        .map(|i| (part.size(i), problem.block_spec(side, i).clone()))
        .collect();
    if parts.iter().all(|(_, s)| s.is_zero()) {
        SimpleFunctionSpec::Zero
    } else {
        SimpleFunctionSpec::Product(parts)
    }
}

fn side_data<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    prox: DMatrix<T>,
    sigma: T,
) -> Result<SideData<T>> {
    let sigma_hat = dense_majorizer(problem, side);
    let adj = dense_adjoint(problem, side);
    check_dim("proximal operator order", sigma_hat.nrows(), prox.nrows())?;
    let m = &sigma_hat + &prox + adj.transpose() * &adj * sigma;
    let m = (&m + m.transpose()) * T::lit(0.5);
    let chol = Cholesky::new(m.clone()).ok_or(Error::Indefinite {
        context: match side {
            Side::X => "M = Sigma_hat_f + S + sigma A A^*",
            Side::Y => "N = Sigma_hat_g + T + sigma B B^*",
        },
        value: SymmetricEigen::new(m.clone()).eigenvalues.min().to_f64_lossy(),
    })?;
    let lmax = SymmetricEigen::new(m.clone()).eigenvalues.max();
    Ok(SideData {
        theta: full_spec(problem, side),
        sigma_hat,
        adj,
        prox,
        m,
        chol,
        lmax,
    })
}

/// The inexact majorized semi-proximal ADMM with dense semi-proximal
/// operators `S`, `T` acting on the whole of `x`, `y`.
pub struct ImsPadmm<'a, T: Real, P: CompositeProblem<T> + ?Sized, I: InnerSolver<T>> {
    problem: &'a P,
    sigma: T,
    tau: T,
    x: SideData<T>,
    y: SideData<T>,
    pub inner: I,
}

impl<'a, T: Real, P: CompositeProblem<T> + ?Sized, I: InnerSolver<T>> ImsPadmm<'a, T, P, I> {
    pub fn new(problem: &'a P, config: &SolverConfig<T>, s: DMatrix<T>, t: DMatrix<T>, inner: I) -> Result<Self> {
        config.validate()?;
        if !config.unsafe_tau {
            steplength_constants(config.tau)?;
        }
        Ok(Self {
            x: side_data(problem, Side::X, s, config.sigma)?,
            y: side_data(problem, Side::Y, t, config.sigma)?,
            problem,
            sigma: config.sigma,
            tau: config.tau,
            inner,
        })
    }

    fn side(&self, side: Side) -> &SideData<T> {
        match side {
            Side::X => &self.x,
            Side::Y => &self.y,
        }
    }

    /// `M` (side `X`) or `N` (side `Y`).
    pub fn operator(&self, side: Side) -> &DMatrix<T> {
        &self.side(side).m
    }

    /// Right-hand side of the group subproblem given the current point `u`
    /// of that group and the latest image of the other group under its
    /// adjoint map.
    pub fn group_rhs(&self, side: Side, u: &BlockVector<T>, z: &DVector<T>, other_image: &DVector<T>) -> DVector<T> {
        let sd = self.side(side);
        let w = z + (other_image - self.problem.c()) * self.sigma;
        (&sd.sigma_hat + &sd.prox) * u.data() - self.problem.gradient(side, u).data() - sd.adj.tr_mul(&w)
    }

    /// Exact minimizer of the group subproblem when `theta = 0`.
    pub fn exact_minimizer(&self, side: Side, rhs: &DVector<T>) -> Result<DVector<T>> {
        let sd = self.side(side);
        if !sd.theta.is_zero() {
            return Err(Error::UnsupportedMetric {
                spec: sd.theta.name(),
                metric: "dense",
            });
        }
        Ok(sd.chol.solve(rhs))
    }

    /// `||M^{-1/2} v||` or `||N^{-1/2} v||`.
    pub fn dual_norm(&self, side: Side, v: &DVector<T>) -> T {
        let sd = self.side(side);
        let w = sd.chol.l().solve_lower_triangular(v).expect("Cholesky factor is invertible");
        w.norm()
    }

    fn solve_side(&mut self, side: Side, u: &BlockVector<T>, rhs: &DVector<T>, eps: T) -> Result<(DVector<T>, T)> {
        let sd = match side {
            Side::X => &self.x,
            Side::Y => &self.y,
        };
        let prob = InnerProblem {
            theta: &sd.theta,
            m: &sd.m,
            chol: &sd.chol,
            lmax: sd.lmax,
            b: rhs,
        };
        let (x, d) = self.inner.solve(&prob, u.data(), eps)?;
        let cert = prob.dual_norm(&d);
        Ok((x, cert))
    }
}

impl<T: Real, P: CompositeProblem<T> + ?Sized, I: InnerSolver<T>> Stepper<T> for ImsPadmm<'_, T, P, I> {
    fn name(&self) -> &'static str {
        "imspadmm"
    }

    fn step(&mut self, state: &mut IterateState<T>, eps: T) -> Result<StepInfo> {
        let p = self.problem;
        let by = adjoint_apply(p, Side::Y, &state.y);
        let bx = self.group_rhs(Side::X, &state.x, &state.z, &by);
        let (x, dx_cert) = self.solve_side(Side::X, &state.x, &bx, eps)?;
        let x = BlockVector::from_data(p.partition(Side::X), x)?;
        let ax = adjoint_apply(p, Side::X, &x);
        let byr = self.group_rhs(Side::Y, &state.y, &state.z, &ax);
        let (y, dy_cert) = self.solve_side(Side::Y, &state.y, &byr, eps)?;
        let y = BlockVector::from_data(p.partition(Side::Y), y)?;
        let r = &ax + adjoint_apply(p, Side::Y, &y) - p.c();
        state.z += &r * (self.tau * self.sigma);
        let dy_norm = y.sub(&state.y).norm().to_f64_lossy();
        state.x = x;
        state.y = y;
        state.r = r;
        state.k += 1;
        let mut info = StepInfo::unaudited(eps.to_f64_lossy());
        info.dx_cert = dx_cert.to_f64_lossy();
        info.dy_cert = dy_cert.to_f64_lossy();
        info.dy_norm = dy_norm;
        Ok(info)
    }

    fn sigma(&self) -> T {
        self.sigma
    }

    fn set_sigma(&mut self, sigma: T) -> Result<()> {
        let s = self.x.prox.clone();
        let t = self.y.prox.clone();
        self.x = side_data(self.problem, Side::X, s, sigma)?;
        self.y = side_data(self.problem, Side::Y, t, sigma)?;
        self.sigma = sigma;
        Ok(())
    }

    fn tau(&self) -> T {
        self.tau
    }
}
