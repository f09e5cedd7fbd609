use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::subsolve::DEFAULT_RANK;

/// `(1 + sqrt 5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Largest step length accepted with the unsafe override.
pub const MAX_UNSAFE_TAU: f64 = 1.95;

/// Inner tolerance schedule `k -> eps_tilde_k`.
#[derive(Clone)]
pub enum EpsSchedule {
    /// `eps0 * min(1, k^{-power})`; `eps0 = None` means `1e-3 (1 + ||c||)`.
    Power { eps0: Option<f64>, power: f64 },
    /// Exact inner solves.
    Zero,
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule::Power { eps0: None, power: 1.2 }
    }
}

impl std::fmt::Debug for EpsSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpsSchedule::Power { eps0, power } => write!(f, "Power {{ eps0: {eps0:?}, power: {power} }}"),
            EpsSchedule::Zero => write!(f, "Zero"),
            EpsSchedule::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl EpsSchedule {
    pub fn value(&self, k: usize, c_norm: f64) -> f64 {
        match self {
            EpsSchedule::Power { eps0, power } => {
                let e0 = eps0.unwrap_or(1e-3 * (1.0 + c_norm));
                let decay = if k == 0 { 1.0 } else { (k as f64).powf(-power).min(1.0) };
                e0 * decay
            }
            EpsSchedule::Zero => 0.0,
            EpsSchedule::Custom(f) => f(k),
        }
    }
}

/// Penalty adaptation driven by the ratio of constraint violation to
/// stationarity. Off unless set in [`SolverConfig::sigma_adapt`].
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaAdapt {
    pub factor: f64,
    pub ratio: f64,
    pub window: usize,
    /// Fraction of `max_iter` at the end during which sigma is frozen.
    pub freeze_fraction: f64,
}

impl Default for SigmaAdapt {
    fn default() -> Self {
        Self {
            factor: 1.25,
            ratio: 5.0,
            window: 50,
            freeze_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig<T: Real> {
    pub sigma: T,
    pub tau: T,
    /// Permits `tau >= (1 + sqrt 5) / 2` (up to 1.95) and turns on the
    /// summability monitor.
    pub unsafe_tau: bool,
    pub eps: EpsSchedule,
    pub tol: f64,
    pub max_iter: usize,
    pub skip_factor: T,
    pub sigma_adapt: Option<SigmaAdapt>,
    pub precond_rank: usize,
    /// Verify every sGS certificate against a dense mirror of the operators.
    pub audit: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            sigma: T::one(),
            tau: T::lit(1.618),
            unsafe_tau: false,
            eps: EpsSchedule::default(),
            tol: 1e-6,
            max_iter: 25_000,
            skip_factor: T::one(),
            sigma_adapt: None,
            precond_rank: DEFAULT_RANK,
            audit: true,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma.to_f64_lossy())));
        }
        let tau = self.tau.to_f64_lossy();
        if tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if tau >= GOLDEN_RATIO && !self.unsafe_tau {
            return Err(Error::Config(format!(
                "tau = {tau} requires the unsafe step-length override (limit {GOLDEN_RATIO})"
            )));
        }
        if tau > MAX_UNSAFE_TAU {
            return Err(Error::Config(format!("tau = {tau} exceeds {MAX_UNSAFE_TAU}")));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        let skip = self.skip_factor.to_f64_lossy();
        if !(0.0..=10.0).contains(&skip) {
            return Err(Error::Config(format!("skip factor must lie in [0, 10], got {skip}")));
        }
        if let Some(a) = &self.sigma_adapt {
            if a.factor <= 1.0 || a.ratio <= 1.0 || a.window == 0 || !(0.0..=1.0).contains(&a.freeze_fraction) {
                return Err(Error::Config("invalid sigma adaptation parameters".into()));
            }
        }
        Ok(())
    }

    pub fn eps(&self, k: usize, c_norm: f64) -> T {
        T::lit(self.eps.value(k, c_norm))
    }
}
