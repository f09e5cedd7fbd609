use std::sync::Arc;

use nalgebra::DMatrix;
use sgs_admm::admm::{
    EpsSchedule, ExactLinearInner, ImsPadmm, IterateState, SgsImsPadmm, SolverConfig, Stepper, TwoBlockProblem,
};
use sgs_admm::harness::{
    compare, complexity_trend, diagnose, kkt_distance, load_problem, read_csv, run_qsdp, save_problem, write_csv,
    Algorithm, RunOptions,
};
use sgs_admm::prox::SimpleFunctionSpec;
use sgs_admm::qsdp::{random_biq, BiqVariant, Formulation, QsdpDual, QsdpProblem};
use sgs_admm::random::rng;

fn biq(n: usize, v: BiqVariant, seed: u64) -> Arc<QsdpProblem<f64>> {
    Arc::new(random_biq(&mut rng(seed), n, v).unwrap())
}

#[test]
fn csv_log_round_trips_field_for_field() {
    let p = biq(5, BiqVariant::SymKron, 3);
    let run = run_qsdp(&p, Algorithm::SgsImsPadmm, &RunOptions::default(), |_| {}).unwrap();
    assert!(run.summary.converged);
    let mut buf = Vec::new();
    write_csv(&mut buf, &run.records).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, run.records);
    assert!(run.records.windows(2).all(|w| w[0].k < w[1].k));
}

#[test]
fn problem_file_reproduces_the_solve() {
    let p = biq(5, BiqVariant::Lyapunov, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    save_problem(&path, &p).unwrap();
    let q = Arc::new(load_problem(&path).unwrap());
    let opts = RunOptions::default();
    let a = run_qsdp(&p, Algorithm::SgsImsPadmm, &opts, |_| {}).unwrap();
    let b = run_qsdp(&q, Algorithm::SgsImsPadmm, &opts, |_| {}).unwrap();
    assert_eq!(a.summary.iterations, b.summary.iterations);
    assert_eq!(a.iterate, b.iterate);
}

#[test]
fn baseline_matches_exact_two_block_admm() {
    let prob = TwoBlockProblem::random(&mut rng(8), &[4], &[3], 5, SimpleFunctionSpec::Zero, SimpleFunctionSpec::Zero)
        .unwrap();
    let cfg = SolverConfig {
        eps: EpsSchedule::Zero,
        ..SolverConfig::default()
    };
    let mut direct = SgsImsPadmm::directly_extended(&prob, &cfg).unwrap();
    let mut exact = ImsPadmm::new(&prob, &cfg, DMatrix::zeros(4, 4), DMatrix::zeros(3, 3), ExactLinearInner).unwrap();
    let mut a = IterateState::initial(&prob).unwrap();
    let mut b = a.clone();
    for k in 0..60 {
        direct.step(&mut a, 0.0).unwrap();
        exact.step(&mut b, 0.0).unwrap();
        let gap = (a.x.data() - b.x.data()).norm() + (a.y.data() - b.y.data()).norm() + (&a.z - &b.z).norm();
        assert!(gap <= 1e-10 * (1.0 + a.z.norm()), "iteration {k}: {gap:e}");
    }
}

#[test]
fn baseline_converges_on_small_biq() {
    let p = biq(6, BiqVariant::Linear, 6 * 31 + 7);
    let run = run_qsdp(&p, Algorithm::SpadmmDirect, &RunOptions::default(), |_| {}).unwrap();
    assert!(run.summary.converged, "eta {}", run.summary.eta_qsdp);
    assert!(run.summary.eta_qsdp <= 1e-6);
    assert_eq!(run.summary.skipped, 0);
}

#[test]
fn baseline_fixed_point_at_its_limit() {
    let p = biq(5, BiqVariant::Linear, 9);
    let mut opts = RunOptions::default();
    opts.config.tol = 1e-11;
    opts.config.max_iter = 100_000;
    let run = run_qsdp(&p, Algorithm::SpadmmDirect, &opts, |_| {}).unwrap();
    assert!(run.summary.converged);
    let dual = QsdpDual::new(p.clone(), Formulation::Direct).unwrap();
    let mut state = dual.state(&run.iterate).unwrap();
    let start = state.clone();
    let cfg = SolverConfig {
        eps: EpsSchedule::Zero,
        ..SolverConfig::default()
    };
    let mut step = SgsImsPadmm::directly_extended(&dual, &cfg).unwrap();
    step.step(&mut state, 0.0).unwrap();
    let moved = (state.y.data() - start.y.data()).norm() + (&state.z - &start.z).norm();
    assert!(moved <= 1e-7 * (1.0 + start.z.norm()), "moved {moved:e}");
}

#[test]
fn compare_reports_both_runs() {
    let p = biq(6, BiqVariant::Explicit, 12);
    let (summary, sgs, direct) = compare(&p, &RunOptions::default()).unwrap();
    assert_eq!(summary.sgs, sgs.summary);
    assert_eq!(summary.direct, direct.summary);
    let ratio = direct.summary.iterations as f64 / sgs.summary.iterations as f64;
    assert_eq!(summary.iteration_ratio, ratio);
    assert!(summary.ratio_line().contains("iteration ratio"));
}

#[test]
fn kkt_distance_shrinks_along_a_run() {
    let p = biq(5, BiqVariant::Explicit, 13);
    let run = run_qsdp(&p, Algorithm::SgsImsPadmm, &RunOptions::default(), |_| {}).unwrap();
    let first = run.records.first().unwrap().dw;
    let last = run.records.last().unwrap().dw;
    assert!(last < 1e-6 * first, "{first:e} -> {last:e}");
    let dual = QsdpDual::new(p.clone(), Formulation::Slack).unwrap();
    let state = dual.state(&run.iterate).unwrap();
    let d = kkt_distance(&dual, &state).unwrap();
    assert!((d - last).abs() <= 1e-9 * (1.0 + last), "{d:e} vs {last:e}");
    let t = complexity_trend(&run.records.iter().map(|r| r.dw).collect::<Vec<_>>()).unwrap();
    assert!(t.decreasing);
}

#[test]
fn potential_decays_against_a_tight_reference() {
    let p = biq(5, BiqVariant::Lyapunov, 14);
    let mut tight = RunOptions::default();
    tight.config.tol = 1e-9;
    tight.config.eps = EpsSchedule::Power {
        eps0: Some(1e-11),
        power: 1.2,
    };
    let reference = run_qsdp(&p, Algorithm::SgsImsPadmm, &tight, |_| {}).unwrap();
    assert!(reference.summary.converged);
    let rows = diagnose(&p, Algorithm::SgsImsPadmm, &RunOptions::default(), &reference.iterate).unwrap();
    assert!(rows.last().unwrap().eta_qsdp <= 1e-6);
    let phi: Vec<f64> = rows.iter().map(|r| r.phi.unwrap()).collect();
    assert!(phi.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(phi[phi.len() - 1] < 1e-3 * phi[0], "{} -> {}", phi[0], phi[phi.len() - 1]);
    let direct = diagnose(&p, Algorithm::SpadmmDirect, &RunOptions::default(), &reference.iterate).unwrap();
    assert!(direct.iter().all(|r| r.phi.is_none()));
    for w in rows.windows(2) {
        assert!(w[1].trend <= w[0].trend * (w[1].k as f64 / w[0].k as f64) * (1.0 + 1e-15));
    }
}
