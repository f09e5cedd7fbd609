use std::sync::Arc;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::records::IterationRecord;
use super::{complexity_trend, kkt_distance};
use crate::admm::{
    constraint_residual, dense_majorizer, sgs_proximal_of, solve, steplength_constants, CompositeProblem, IterateState,
    IterationLog, ResidualSample, SgsImsPadmm, Side, SolverConfig, Stepper,
};
use crate::error::{Error, Result};
use crate::qsdp::{kkt_residuals, DualIterate, Formulation, QsdpDual, QsdpProblem, ResidualReport, WSolver};
use crate::subsolve::DEFAULT_RANK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "sgs-imspadmm")]
    SgsImsPadmm,
    #[serde(rename = "spadmm-direct")]
    SpadmmDirect,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SgsImsPadmm => "sgs-imspadmm",
            Algorithm::SpadmmDirect => "spadmm-direct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Algorithm::SgsImsPadmm, Algorithm::SpadmmDirect]
            .into_iter()
            .find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: SolverConfig<f64>,
    /// W-block solver for sGS-imsPADMM. The baseline always solves exactly.
    pub w_solver: WSolver,
    pub precond_rank: usize,
    /// Evaluate `D(w)` at every iteration (costs a few extra projections).
    pub track_dw: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            config: SolverConfig::default(),
            w_solver: WSolver::default(),
            precond_rank: DEFAULT_RANK,
            track_dw: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub final_value: f64,
    pub tenth_value: f64,
    pub decreasing: bool,
}

/// JSON summary of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m_e: usize,
    pub m_i: usize,
    pub q_kind: String,
    pub converged: bool,
    pub iterations: usize,
    pub tol: f64,
    pub tau: f64,
    pub sigma: f64,
    pub setup_s: f64,
    pub time_s: f64,
    pub eta_qsdp: f64,
    pub eta_gap: f64,
    pub residuals: ResidualReport,
    pub audit_passed: bool,
    /// Largest `certificate / bound` over all audited iterations.
    pub max_certificate_ratio: Option<f64>,
    pub kappa: Option<(f64, f64)>,
    pub skipped: usize,
    pub pcg_iters: usize,
    pub trend: Option<TrendSummary>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct QsdpRun {
    pub summary: SolveSummary,
    pub records: Vec<IterationRecord>,
    pub iterate: DualIterate<f64>,
}

pub(crate) fn build_dual(
    problem: &Arc<QsdpProblem<f64>>,
    algorithm: Algorithm,
    options: &RunOptions,
) -> Result<QsdpDual<f64>> {
    match algorithm {
        Algorithm::SgsImsPadmm => {
            QsdpDual::with_options(problem.clone(), Formulation::Slack, options.w_solver, options.precond_rank)
        }
        Algorithm::SpadmmDirect => {
            QsdpDual::with_options(problem.clone(), Formulation::Direct, WSolver::Eigen, options.precond_rank)
        }
    }
}

fn build_stepper<'a>(
    dual: &'a QsdpDual<f64>,
    algorithm: Algorithm,
    config: &SolverConfig<f64>,
) -> Result<SgsImsPadmm<'a, f64, QsdpDual<f64>>> {
    match algorithm {
        Algorithm::SgsImsPadmm => SgsImsPadmm::new(dual, config),
        Algorithm::SpadmmDirect => SgsImsPadmm::directly_extended(dual, config),
    }
}

fn sample(dual: &QsdpDual<f64>, state: &IterateState<f64>, track_dw: bool) -> Result<ResidualSample> {
    let r = kkt_residuals(dual.problem(), &dual.iterate(state)?)?;
    let dw = if track_dw { kkt_distance(dual, state)? } else { f64::NAN };
    let mut components = r.components().to_vec();
    components.push(("eta_gap", r.eta_gap));
    components.push(("Dw", dw));
    let dual_side = [r.eta_x, r.eta_z, r.eta_p, r.eta_w, r.eta_s, r.eta_i]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(ResidualSample {
        eta: r.eta_qsdp,
        primal: r.eta_d,
        dual: dual_side,
        components,
    })
}

fn record(log: &IterationLog) -> IterationRecord {
    let c = |name: &str| log.residual.component(name).unwrap_or(f64::NAN);
    IterationRecord {
        k: log.k,
        eta_d: c("eta_D"),
        eta_p: c("eta_P"),
        eta_x: c("eta_X"),
        eta_z: c("eta_Z"),
        eta_w: c("eta_W"),
        eta_s: c("eta_S"),
        eta_i: c("eta_I"),
        eta_qsdp: log.residual.eta,
        eta_gap: c("eta_gap"),
        dw: c("Dw"),
        dx_cert: log.step.dx_cert,
        dy_cert: log.step.dy_cert,
        pcg_iters: log.step.pcg_iters,
        skipped: log.step.skipped,
        sigma: log.sigma,
        time_s: log.time_s,
    }
}

/// `D(w^{i+1})` for `i = 1..k`, i.e. the logged values from the second
/// iteration on.
fn trend_of(records: &[IterationRecord]) -> Option<TrendSummary> {
    let d: Vec<f64> = records.iter().skip(1).map(|r| r.dw).collect();
    if d.iter().any(|v| v.is_nan()) {
        return None;
    }
    complexity_trend(&d).map(|t| TrendSummary {
        final_value: t.final_value,
        tenth_value: t.tenth_value,
        decreasing: t.decreasing,
    })
}

/// Solves `problem` with `algorithm`, calling `on_record` after every
/// iteration.
pub fn run_qsdp(
    problem: &Arc<QsdpProblem<f64>>,
    algorithm: Algorithm,
    options: &RunOptions,
    mut on_record: impl FnMut(&IterationRecord),
) -> Result<QsdpRun> {
    let setup = Instant::now();
    let dual = build_dual(problem, algorithm, options)?;
    let mut config = options.config.clone();
    config.precond_rank = options.precond_rank;
    let mut stepper = build_stepper(&dual, algorithm, &config)?;
    let setup_s = setup.elapsed().as_secs_f64();
    let state = IterateState::initial(&dual)?;
    let c_norm = dual.c().norm();

    let mut records = Vec::new();
    let mut max_ratio: Option<f64> = None;
    let report = solve(
        &mut stepper,
        state,
        &config,
        c_norm,
        |s| sample(&dual, s, options.track_dw),
        |log| {
            if log.step.audited {
                for (c, b) in [(log.step.dx_cert, log.step.dx_bound), (log.step.dy_cert, log.step.dy_bound)] {
                    if b > 0.0 {
                        let r = c / b;
                        max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
                    }
                }
            }
            let rec = record(log);
            on_record(&rec);
            records.push(rec);
        },
    )?;
    let iterate = dual.iterate(&report.state)?;
    let residuals = kkt_residuals(problem, &iterate)?;
    let summary = SolveSummary {
        algorithm,
        n: problem.n,
        m_e: problem.m_e(),
        m_i: problem.m_i(),
        q_kind: problem.q.kind().to_string(),
        converged: report.converged,
        iterations: report.iterations,
        tol: config.tol,
        tau: config.tau,
        sigma: report.sigma,
        setup_s,
        time_s: report.elapsed_s,
        eta_qsdp: residuals.eta_qsdp,
        eta_gap: residuals.eta_gap,
        residuals,
        audit_passed: report.audit_passed,
        max_certificate_ratio: max_ratio,
        kappa: stepper.kappas(),
        skipped: report.total_skipped(),
        pcg_iters: report.total_pcg(),
        trend: trend_of(&records),
    };
    info!(
        "{}: converged {} after {} iterations in {:.2}s, eta {:.2e}, gap {:.2e}",
        algorithm.name(),
        summary.converged,
        summary.iterations,
        summary.time_s,
        summary.eta_qsdp,
        summary.eta_gap
    );
    Ok(QsdpRun {
        summary,
        records,
        iterate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub sgs: SolveSummary,
    pub direct: SolveSummary,
    /// Baseline iterations over sGS-imsPADMM iterations.
    pub iteration_ratio: f64,
    pub time_ratio: f64,
}

impl CompareSummary {
    pub fn ratio_line(&self) -> String {
        format!(
            "iteration ratio spadmm-direct/sgs-imspadmm = {} / {} = {:.3} (time ratio {:.3})",
            self.direct.iterations, self.sgs.iterations, self.iteration_ratio, self.time_ratio
        )
    }
}

/// Runs sGS-imsPADMM and then the directly extended baseline on the same
/// problem from the same starting point.
pub fn compare(
    problem: &Arc<QsdpProblem<f64>>,
    options: &RunOptions,
) -> Result<(CompareSummary, QsdpRun, QsdpRun)> {
    let start = |a| -> Result<DualIterate<f64>> {
        let d = build_dual(problem, a, options)?;
        d.iterate(&IterateState::initial(&d)?)
    };
    // `u` is a multiplier in one formulation and a residual in the other
    let shared = |d: DualIterate<f64>| (d.x, d.z, d.w, d.s, d.y_e, d.y_i);
    if shared(start(Algorithm::SgsImsPadmm)?) != shared(start(Algorithm::SpadmmDirect)?) {
        return Err(Error::Contract("the two formulations start from different points".into()));
    }
    let sgs = run_qsdp(problem, Algorithm::SgsImsPadmm, options, |_| {})?;
    let direct = run_qsdp(problem, Algorithm::SpadmmDirect, options, |_| {})?;
    let summary = CompareSummary {
        iteration_ratio: direct.summary.iterations as f64 / sgs.summary.iterations.max(1) as f64,
        time_ratio: direct.summary.time_s / sgs.summary.time_s.max(f64::MIN_POSITIVE),
        sgs: sgs.summary.clone(),
        direct: direct.summary.clone(),
    };
    Ok((summary, sgs, direct))
}

/// Dense ingredients of the potential `phi_k(w_bar)` for fixed `sigma`, `tau`.
pub struct PhiPotential {
    x_metric: DMatrix<f64>,
    y_metric: DMatrix<f64>,
    reference: IterateState<f64>,
    sigma: f64,
    tau: f64,
    alpha: f64,
    alpha_hat: f64,
}

impl PhiPotential {
    pub fn new<P: CompositeProblem<f64> + ?Sized>(
        problem: &P,
        reference: IterateState<f64>,
        sigma: f64,
        tau: f64,
    ) -> Result<Self> {
        let c = steplength_constants(tau)?;
        let x_metric = dense_majorizer(problem, Side::X) + sgs_proximal_of(problem, Side::X, sigma)?.s_hat;
        let y_metric = dense_majorizer(problem, Side::Y) + sgs_proximal_of(problem, Side::Y, sigma)?.s_hat;
        Ok(Self {
            x_metric,
            y_metric,
            reference,
            sigma,
            tau,
            alpha: c.alpha,
            alpha_hat: c.alpha_hat,
        })
    }

    /// `phi_k(w_bar)` at `state = w^k` with `prev_y = y^{k-1}`.
    pub fn value<P: CompositeProblem<f64> + ?Sized>(
        &self,
        problem: &P,
        state: &IterateState<f64>,
        prev_y: &nalgebra::DVector<f64>,
    ) -> f64 {
        let w = &self.reference;
        let quad = |m: &DMatrix<f64>, v: nalgebra::DVector<f64>| (m * &v).dot(&v);
        let dz = (&w.z - &state.z).norm_squared() / (self.tau * self.sigma);
        let dx = quad(&self.x_metric, w.x.data() - state.x.data());
        let dy = quad(&self.y_metric, w.y.data() - state.y.data());
        let mixed = constraint_residual(problem, &w.x, &state.y).norm_squared() * self.sigma;
        let r = state.r.norm_squared() * self.alpha_hat * self.sigma;
        let step = quad(&self.y_metric, state.y.data() - prev_y) * self.alpha;
        dz + dx + dy + mixed + r + step
    }
}

/// One row of a diagnose run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRecord {
    pub k: usize,
    pub eta_qsdp: f64,
    pub dw: f64,
    /// `k * min_{i <= k} D(w^i)`.
    pub trend: f64,
    pub phi: Option<f64>,
}

/// `phi_k(w_bar)` for a state of `dual` and the previous `y`.
pub fn phi_potential(
    dual: &QsdpDual<f64>,
    reference: &DualIterate<f64>,
    state: &IterateState<f64>,
    prev_y: &nalgebra::DVector<f64>,
    sigma: f64,
    tau: f64,
) -> Result<f64> {
    let p = PhiPotential::new(dual, dual.state(reference)?, sigma, tau)?;
    Ok(p.value(dual, state, prev_y))
}

/// Runs `algorithm` at fixed sigma and records `D(w^k)`, its trend and, for
/// sGS-imsPADMM, `phi_k(w_bar)` against `reference`.
pub fn diagnose(
    problem: &Arc<QsdpProblem<f64>>,
    algorithm: Algorithm,
    options: &RunOptions,
    reference: &DualIterate<f64>,
) -> Result<Vec<DiagnoseRecord>> {
    let dual = build_dual(problem, algorithm, options)?;
    let mut config = options.config.clone();
    config.precond_rank = options.precond_rank;
    config.sigma_adapt = None;
    config.validate()?;
    let mut stepper = build_stepper(&dual, algorithm, &config)?;
    let mut state = IterateState::initial(&dual)?;
    let c_norm = dual.c().norm();
    let phi = match algorithm {
        Algorithm::SgsImsPadmm => Some(PhiPotential::new(&dual, dual.state(reference)?, config.sigma, config.tau)?),
        Algorithm::SpadmmDirect => None,
    };

    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    while state.k < config.max_iter {
        let prev_y = state.y.data().clone();
        let eps = config.eps(state.k, c_norm);
        stepper.step(&mut state, eps)?;
        let s = sample(&dual, &state, true)?;
        let dw = s.component("Dw").unwrap_or(f64::NAN);
        best = best.min(dw);
        // phi at the new iterate uses y^{k-1} = prev_y
        let phi_next = phi.as_ref().map(|p| p.value(&dual, &state, &prev_y));
        out.push(DiagnoseRecord {
            k: state.k,
            eta_qsdp: s.eta,
            dw,
            trend: state.k as f64 * best,
            phi: phi_next,
        });
        if !s.eta.is_finite() {
            return Err(Error::Divergence {
                iteration: state.k,
                eta: s.eta,
                previous: out.iter().rev().nth(1).map_or(f64::NAN, |r: &DiagnoseRecord| r.eta_qsdp),
            });
        }
        if s.eta <= config.tol {
            break;
        }
    }
    Ok(out)
}
