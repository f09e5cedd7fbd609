use std::time::Instant;

use log::{debug, warn};
use nalgebra::DVector;

use super::{constraint_residual, CompositeProblem, Side, SolverConfig};
use crate::blockops::BlockVector;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `w^k = (x^k, y^k, z^k)` together with the cached `r^k = A^* x + B^* y - c`.
#[derive(Debug, Clone)]
pub struct IterateState<T: Real> {
    pub x: BlockVector<T>,
    pub y: BlockVector<T>,
    pub z: DVector<T>,
    pub r: DVector<T>,
    pub k: usize,
}

impl<T: Real> IterateState<T> {
    /// `x^0`, `y^0` from the problem's initial points and `z^0 = 0`.
    pub fn initial<P: CompositeProblem<T> + ?Sized>(problem: &P) -> Result<Self> {
        let x = problem.initial_point(Side::X)?;
        let y = problem.initial_point(Side::Y)?;
        Self::from_parts(problem, x, y, DVector::zeros(problem.z_dim()))
    }

    pub fn from_parts<P: CompositeProblem<T> + ?Sized>(
        problem: &P,
        x: BlockVector<T>,
        y: BlockVector<T>,
        z: DVector<T>,
    ) -> Result<Self> {
        crate::error::check_dim("multiplier length", problem.z_dim(), z.len())?;
        let r = constraint_residual(problem, &x, &y);
        Ok(Self { x, y, z, r, k: 0 })
    }
}

/// Diagnostics of one outer step. Certificates are `NaN` when not audited.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub eps: f64,
    pub dx_cert: f64,
    pub dy_cert: f64,
    pub dx_bound: f64,
    pub dy_bound: f64,
    pub pcg_iters: usize,
    pub block_pcg: Vec<(usize, usize)>,
    pub skipped: usize,
    pub audited: bool,
    /// `||y^{k+1} - y^k||`.
    pub dy_norm: f64,
}

impl StepInfo {
    pub fn unaudited(eps: f64) -> Self {
        Self {
            eps,
            dx_cert: f64::NAN,
            dy_cert: f64::NAN,
            dx_bound: f64::NAN,
            dy_bound: f64::NAN,
            pcg_iters: 0,
            block_pcg: Vec::new(),
            skipped: 0,
            audited: false,
            dy_norm: 0.0,
        }
    }

    pub fn audit_ok(&self) -> bool {
        !self.audited || (self.dx_cert <= self.dx_bound && self.dy_cert <= self.dy_bound)
    }
}

/// One outer iteration of an ADMM-type method.
pub trait Stepper<T: Real> {
    fn name(&self) -> &'static str;

    /// Advances `state` by one iteration with inner tolerance `eps`.
    fn step(&mut self, state: &mut IterateState<T>, eps: T) -> Result<StepInfo>;

    fn sigma(&self) -> T;

    fn set_sigma(&mut self, sigma: T) -> Result<()>;

    fn tau(&self) -> T;
}

/// Residual summary used for stopping and penalty adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample {
    /// Stopping measure.
    pub eta: f64,
    /// Scaled constraint violation.
    pub primal: f64,
    /// Scaled stationarity violation.
    pub dual: f64,
    pub components: Vec<(&'static str, f64)>,
}

impl ResidualSample {
    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub k: usize,
    pub residual: ResidualSample,
    pub step: StepInfo,
    pub sigma: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub algorithm: &'static str,
    pub converged: bool,
    pub iterations: usize,
    pub initial_residual: ResidualSample,
    pub final_residual: ResidualSample,
    pub history: Vec<IterationLog>,
    pub audit_passed: bool,
    pub state: IterateState<T>,
    pub sigma: f64,
    pub elapsed_s: f64,
    /// `sum_k (||Delta y^k||^2 + ||r^{k+1}||^2)` when the unsafe step length
    /// monitor is active.
    pub summability: Option<f64>,
}

impl<T: Real> SolveReport<T> {
    pub fn total_skipped(&self) -> usize {
        self.history.iter().map(|h| h.step.skipped).sum()
    }

    pub fn total_pcg(&self) -> usize {
        self.history.iter().map(|h| h.step.pcg_iters).sum()
    }
}

const DIVERGENCE_WINDOW: usize = 1000;
const DIVERGENCE_FACTOR: f64 = 1e6;

struct SigmaState {
    high: usize,
    low: usize,
}

/// Runs `stepper` from `state` until `residual_fn(state).eta <= tol` or
/// `max_iter` steps. `log_sink` sees every iteration record.
pub fn solve<T, S, R, L>(
    stepper: &mut S,
    mut state: IterateState<T>,
    config: &SolverConfig<T>,
    c_norm: f64,
    mut residual_fn: R,
    mut log_sink: L,
) -> Result<SolveReport<T>>
where
    T: Real,
    S: Stepper<T> + ?Sized,
    R: FnMut(&IterateState<T>) -> Result<ResidualSample>,
    L: FnMut(&IterationLog),
{
    config.validate()?;
    let start = Instant::now();
    let initial = residual_fn(&state)?;
    let mut current = initial.clone();
    let mut history: Vec<IterationLog> = Vec::new();
    let mut etas = vec![initial.eta];
    let mut audit_passed = true;
    let mut summability = config.unsafe_tau.then_some(0.0);
    let mut sig = SigmaState { high: 0, low: 0 };
    let freeze_at = config
        .sigma_adapt
        .as_ref()
        .map(|a| ((1.0 - a.freeze_fraction) * config.max_iter as f64) as usize);
    let mut converged = current.eta <= config.tol;

    while !converged && state.k < config.max_iter {
        let eps = config.eps(state.k, c_norm);
        let info = stepper.step(&mut state, eps)?;
        audit_passed &= info.audit_ok();
        let res = residual_fn(&state)?;
        let k = state.k;
        if !res.eta.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                eta: res.eta,
                previous: current.eta,
            });
        }
        if k >= DIVERGENCE_WINDOW {
            let past = etas[k - DIVERGENCE_WINDOW];
            if res.eta > DIVERGENCE_FACTOR * past {
                warn!("divergence at iteration {k}: eta {:e}, {} iterations ago {:e}", res.eta, DIVERGENCE_WINDOW, past);
                return Err(Error::Divergence {
                    iteration: k,
                    eta: res.eta,
                    previous: past,
                });
            }
        }
        etas.push(res.eta);
        if let Some(total) = summability.as_mut() {
            let inc = info.dy_norm.powi(2) + state.r.norm().to_f64_lossy().powi(2);
            *total += inc;
            if k % 1000 == 0 && inc * k as f64 > *total {
                warn!("summability monitor: increment {inc:e} at iteration {k} does not decay (sum {total:e})");
            }
        }
        let record = IterationLog {
            k,
            residual: res.clone(),
            step: info,
            sigma: stepper.sigma().to_f64_lossy(),
            time_s: start.elapsed().as_secs_f64(),
        };
        log_sink(&record);
        history.push(record);
        converged = res.eta <= config.tol;
        current = res;

        if let (Some(adapt), Some(freeze)) = (&config.sigma_adapt, freeze_at) {
            if k < freeze && current.dual > 0.0 && current.primal > 0.0 {
                let ratio = current.primal / current.dual;
                if ratio > adapt.ratio {
                    sig.high += 1;
                    sig.low = 0;
                } else if ratio < 1.0 / adapt.ratio {
                    sig.low += 1;
                    sig.high = 0;
                } else {
                    sig.high = 0;
                    sig.low = 0;
                }
                let factor = T::lit(adapt.factor);
                if sig.high >= adapt.window {
                    stepper.set_sigma(stepper.sigma() * factor)?;
                    debug!("iteration {k}: sigma raised to {:e}", stepper.sigma().to_f64_lossy());
                    sig.high = 0;
                } else if sig.low >= adapt.window {
                    stepper.set_sigma(stepper.sigma() / factor)?;
                    debug!("iteration {k}: sigma lowered to {:e}", stepper.sigma().to_f64_lossy());
                    sig.low = 0;
                }
            }
        }
    }

    Ok(SolveReport {
        algorithm: stepper.name(),
        converged,
        iterations: state.k,
        initial_residual: initial,
        final_residual: current,
        history,
        audit_passed,
        sigma: stepper.sigma().to_f64_lossy(),
        state,
        elapsed_s: start.elapsed().as_secs_f64(),
        summability,
    })
}
