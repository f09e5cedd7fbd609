//! Acceptance checks, one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use sgs_admm::admm::{
    adjoint_apply, sgs_proximal_of, steplength_constants, EpsSchedule, ExactLinearInner, ImsPadmm, IterateState,
    ProxGradientInner, SgsImsPadmm, Side, SolverConfig, Stepper, TwoBlockProblem, GOLDEN_RATIO,
};
use sgs_admm::blockops::{BlockMap, BlockOperator};
use sgs_admm::harness::{compare, run_qsdp, Algorithm, QsdpRun, RunOptions};
use sgs_admm::prox::SimpleFunctionSpec;
use sgs_admm::qsdp::{kkt_residuals, random_biq, BiqVariant, DualIterate, QOperatorSpec, QsdpProblem};
use sgs_admm::random::{random_block_psd, random_block_vector, random_psd, random_vector, rng};
use sgs_admm::sgs::{error_bound, DenseSweep, InnerMode, QuadraticBlockObjective};
use sgs_admm::subsolve::{build_truncated_prox, pcg_solve};
use sgs_admm::svec::{svec_len, svec_position};

struct Line {
    id: u8,
    pass: bool,
    detail: String,
}

fn line(id: u8, pass: bool, detail: impl Into<String>) -> Line {
    Line {
        id,
        pass,
        detail: detail.into(),
    }
}

fn sgs_exact() -> Line {
    let start = Instant::now();
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let s = 2 + trial % 4;
        let sizes: Vec<usize> = (0..s).map(|i| 1 + (trial * 5 + i * 3) % 8).collect();
        let h = random_block_psd(&mut r, &sizes);
        let b = random_block_vector(&mut r, h.partition());
        let um = random_block_vector(&mut r, h.partition());
        let obj = QuadraticBlockObjective::new(h, b, SimpleFunctionSpec::Zero).unwrap();
        let res = DenseSweep::new(&obj, InnerMode::Exact).cycle(&um, 0.0, 0.0).unwrap();
        let want = obj.dense_minimizer(&um).unwrap();
        worst = worst.max((res.u_plus.data() - want.data()).norm() / want.norm().max(1.0));
    }
    let t = start.elapsed().as_secs_f64();
    line(
        1,
        worst <= 1e-10 && t < 5.0,
        format!("50 instances, max relative error {worst:.2e}, {t:.3}s"),
    )
}

fn sgs_inexact() -> Line {
    let mut r = rng(1002);
    let mut worst_stat: f64 = 0.0;
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for trial in 0..50 {
        let s = 2 + trial % 4;
        let sizes: Vec<usize> = (0..s).map(|i| 2 + (trial + 2 * i) % 6).collect();
        let h = random_block_psd(&mut r, &sizes);
        let p = Arc::clone(h.partition());
        // diagonal first block so the nonnegativity prox is separable
        let mut m = h.matrix().clone();
        for i in 0..p.size(0) {
            for j in 0..p.size(0) {
                if i != j {
                    m[(i, j)] = 0.0;
                }
            }
            m[(i, i)] += 3.0;
        }
        let h = BlockOperator::new(m, &p).unwrap();
        let b = random_block_vector(&mut r, &p);
        let um = random_block_vector(&mut r, &p);
        let obj = QuadraticBlockObjective::new(h, b, SimpleFunctionSpec::Nonneg).unwrap();
        let res = DenseSweep::new(&obj, InnerMode::Cg { maxit: 2 })
            .cycle(&um, 1e-2, 1.0)
            .unwrap();
        let d = res.d.clone().unwrap();
        worst_stat = worst_stat.max(obj.perturbed_stationarity(&res.u_plus, &um, &d).unwrap());
        let lhs = obj.h.hat_inv_sqrt_norm(&d).unwrap();
        let rhs = error_bound(&res.delta_tilde, &res.delta, &obj.h).unwrap();
        worst_excess = worst_excess.max(lhs - rhs);
        if lhs > rhs + 1e-12 {
            violations += 1;
        }
    }
    line(
        2,
        worst_stat <= 1e-10 && violations == 0,
        format!("max stationarity {worst_stat:.2e}, error-bound violations {violations} (max excess {worst_excess:.2e})"),
    )
}

fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = e.eigenvalues.map(|l| 1.0 / l.sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

fn m_norm(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (m * v).dot(v).max(0.0).sqrt()
}

fn error_propagation() -> Line {
    let prob = TwoBlockProblem::random(&mut rng(1003), &[4], &[3], 6, SimpleFunctionSpec::Zero, SimpleFunctionSpec::Zero)
        .unwrap();
    let cfg = SolverConfig {
        eps: EpsSchedule::Custom(Arc::new(|k| 0.5 / (k as f64 + 1.0).powf(1.2))),
        ..SolverConfig::default()
    };
    let mut ims = ImsPadmm::new(
        &prob,
        &cfg,
        DMatrix::zeros(4, 4),
        DMatrix::identity(3, 3) * 0.1,
        ProxGradientInner::new(10_000, 0.0),
    )
    .unwrap();
    let m = ims.operator(Side::X).clone();
    let n = ims.operator(Side::Y).clone();
    let k = inv_sqrt(&n) * prob.b_adj.transpose() * &prob.a_adj * inv_sqrt(&m);
    let coupling = SymmetricEigen::new(&k * k.transpose()).eigenvalues.max().sqrt();
    let y_factor = 1.0 + cfg.sigma * coupling;
    let mut st = IterateState::initial(&prob).unwrap();
    let iterations = 220;
    let (mut x_fail, mut y_fail) = (0, 0);
    let (mut x_ratio, mut y_ratio): (f64, f64) = (0.0, 0.0);
    for k in 0..iterations {
        let eps = cfg.eps(k, prob.c.norm());
        let by = adjoint_apply(&prob, Side::Y, &st.y);
        let x_bar = ims.exact_minimizer(Side::X, &ims.group_rhs(Side::X, &st.x, &st.z, &by)).unwrap();
        let ax_bar = &prob.a_adj * &x_bar;
        let y_bar = ims
            .exact_minimizer(Side::Y, &ims.group_rhs(Side::Y, &st.y, &st.z, &ax_bar))
            .unwrap();
        ims.step(&mut st, eps).unwrap();
        let ex = m_norm(&m, &(st.x.data() - &x_bar));
        let ey = m_norm(&n, &(st.y.data() - &y_bar));
        x_ratio = x_ratio.max(ex / eps);
        y_ratio = y_ratio.max(ey / (y_factor * eps));
        x_fail += usize::from(ex > eps * (1.0 + 1e-10));
        y_fail += usize::from(ey > y_factor * eps * (1.0 + 1e-10));
    }
    line(
        3,
        x_fail == 0 && y_fail == 0,
        format!(
            "{iterations} iterations, x bound violated {x_fail}x (max ratio {x_ratio:.3}), y bound violated {y_fail}x (max ratio {y_ratio:.3})"
        ),
    )
}

fn iterate_gap(a: &IterateState<f64>, b: &IterateState<f64>) -> f64 {
    let scale = 1.0 + a.x.norm() + a.y.norm() + a.z.norm();
    ((a.x.data() - b.x.data()).norm() + (a.y.data() - b.y.data()).norm() + (&a.z - &b.z).norm()) / scale
}

fn hat_reduction() -> Line {
    let shapes: [(&[usize], &[usize], usize); 10] = [
        (&[2, 3], &[2, 2], 5),
        (&[1, 1, 1], &[3], 4),
        (&[3, 1], &[2], 4),
        (&[2, 2, 2], &[1, 2, 1], 6),
        (&[4, 1], &[2, 3], 6),
        (&[1, 2, 3, 1], &[2, 1], 5),
        (&[2, 1], &[1, 1, 1, 1], 4),
        (&[3, 3], &[3, 3], 7),
        (&[1, 4], &[4, 1], 5),
        (&[2, 1, 2], &[2, 1, 2], 6),
    ];
    let cfg = SolverConfig {
        eps: EpsSchedule::Zero,
        skip_factor: 0.0,
        ..SolverConfig::default()
    };
    let mut worst: f64 = 0.0;
    for (t, (xs, ys, z)) in shapes.iter().enumerate() {
        let spec = if t % 2 == 1 { SimpleFunctionSpec::Nonneg } else { SimpleFunctionSpec::Zero };
        let prob = TwoBlockProblem::random(&mut rng(1100 + t as u64), xs, ys, *z, spec.clone(), spec).unwrap();
        let s_hat = sgs_proximal_of(&prob, Side::X, cfg.sigma).unwrap().s_hat;
        let t_hat = sgs_proximal_of(&prob, Side::Y, cfg.sigma).unwrap().s_hat;
        let mut sgs = SgsImsPadmm::new(&prob, &cfg).unwrap();
        let mut ims: Box<dyn Stepper<f64>> = if t % 2 == 1 {
            Box::new(ImsPadmm::new(&prob, &cfg, s_hat, t_hat, ProxGradientInner::new(200_000, 1e-13)).unwrap())
        } else {
            Box::new(ImsPadmm::new(&prob, &cfg, s_hat, t_hat, ExactLinearInner).unwrap())
        };
        let mut a = IterateState::initial(&prob).unwrap();
        let mut b = a.clone();
        for _ in 0..100 {
            sgs.step(&mut a, 0.0).unwrap();
            ims.step(&mut b, 0.0).unwrap();
            worst = worst.max(iterate_gap(&a, &b));
        }
    }
    line(4, worst <= 1e-9, format!("10 instances x 100 iterations, max per-iterate gap {worst:.2e}"))
}

/// Full `n^2` coordinates, built from the problem data without the svec
/// helpers of the library.
struct DenseModel {
    n: usize,
    a_e: DMatrix<f64>,
    a_i: DMatrix<f64>,
    q: DMatrix<f64>,
}

fn vec_of(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

fn mat_of(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Row `svec_k(X)` as a functional on `vec(X)`.
fn svec_rows(n: usize) -> DMatrix<f64> {
    let nv = svec_len(n);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut s = DMatrix::zeros(nv, n * n);
    for k in 0..nv {
        let (i, j) = svec_position(k);
        if i == j {
            s[(k, i * n + i)] = 1.0;
        } else {
            s[(k, i + j * n)] = r;
            s[(k, j + i * n)] = r;
        }
    }
    s
}

impl DenseModel {
    fn new(p: &QsdpProblem<f64>) -> Self {
        let n = p.n;
        let s = svec_rows(n);
        let eye = DMatrix::<f64>::identity(n, n);
        let q = match &p.q {
            QOperatorSpec::Vacuous => DMatrix::zeros(n * n, n * n),
            QOperatorSpec::Explicit(m) => s.transpose() * m * &s,
            QOperatorSpec::SymKron { a, b } => (b.transpose().kronecker(a) + a.transpose().kronecker(b)) * 0.5,
            QOperatorSpec::Lyapunov { a } => (eye.kronecker(a) + a.transpose().kronecker(&eye)) * 0.5,
        };
        Self {
            n,
            a_e: p.a_e.dense() * &s,
            a_i: p.a_i.dense() * &s,
            q,
        }
    }

    fn q(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        mat_of(&(&self.q * vec_of(x)), self.n)
    }

    /// `eta_qsdp`.
    fn eta(&self, p: &QsdpProblem<f64>, it: &DualIterate<f64>) -> f64 {
        let n = self.n;
        let (x, z, w, s) = (&it.x, &it.z, &it.w, &it.s);
        let nx = x.norm();
        let qx = self.q(x);
        let qw = self.q(w);
        let aty = mat_of(&(self.a_e.transpose() * &it.y_e + self.a_i.transpose() * &it.y_i), n);
        let eta_d = (aty + s + z - &qw - &p.c).norm() / (1.0 + p.c.norm());
        let clip = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(i, j)].clamp(p.set.lower[(i, j)], p.set.upper[(i, j)]));
        let eta_x = (x - clip(x)).norm() / (1.0 + nx);
        let eta_z = (x - clip(&(x - z))).norm() / (1.0 + nx + z.norm());
        let eta_p = (&self.a_e * vec_of(x) - &p.b_e).norm() / (1.0 + p.b_e.norm());
        let q_norm = SymmetricEigen::new(self.q.clone()).eigenvalues.amax();
        let eta_w = (&qx - &qw).norm() / (1.0 + q_norm);
        let eig = SymmetricEigen::new(x.clone());
        let neg = eig.eigenvalues.map(|l| l.min(0.0)).norm();
        let eta_s = (neg / (1.0 + nx)).max(x.dot(s).abs() / (1.0 + nx + s.norm()));
        let g = &self.a_i * vec_of(x) - &p.b_i;
        let y = &it.y_i;
        let minus = |v: &DVector<f64>| v.map(|e| e.min(0.0)).norm();
        let eta_i = if y.is_empty() {
            0.0
        } else {
            (minus(y) / (1.0 + y.norm()))
                .max(minus(&g) / (1.0 + p.b_i.norm()))
                .max(g.dot(y).abs() / (1.0 + g.norm() + y.norm()))
        };
        [eta_d, eta_x, eta_z, eta_p, eta_w, eta_s, eta_i]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

struct BiqRun {
    label: String,
    problem: Arc<QsdpProblem<f64>>,
    run: QsdpRun,
}

fn biq_problem(n: usize, v: BiqVariant) -> Arc<QsdpProblem<f64>> {
    Arc::new(random_biq(&mut rng(n as u64 * 31 + 7), n, v).unwrap())
}

fn biq_runs() -> (Vec<BiqRun>, f64) {
    let start = Instant::now();
    let mut out = Vec::new();
    for n in [6, 11, 16] {
        for v in BiqVariant::ALL {
            let problem = biq_problem(n, v);
            let run = run_qsdp(&problem, Algorithm::SgsImsPadmm, &RunOptions::default(), |_| {}).unwrap();
            let s = &run.summary;
            println!(
                "  n={n:2} {:13} converged={} iterations={:5} time={:6.2}s eta={:.2e} gap={:+.2e} skipped={} audit={}",
                v.name(),
                s.converged,
                s.iterations,
                s.time_s,
                s.eta_qsdp,
                s.eta_gap,
                s.skipped,
                s.audit_passed
            );
            out.push(BiqRun {
                label: format!("n={n} {}", v.name()),
                problem,
                run,
            });
        }
    }
    (out, start.elapsed().as_secs_f64())
}

fn convergence(runs: &[BiqRun], total_s: f64) -> Line {
    let mut failures = Vec::new();
    let mut worst_mismatch: f64 = 0.0;
    for r in runs {
        let s = &r.run.summary;
        let eta = DenseModel::new(&r.problem).eta(&r.problem, &r.run.iterate);
        let library = kkt_residuals(&r.problem, &r.run.iterate).unwrap().eta_qsdp;
        worst_mismatch = worst_mismatch.max((eta - library).abs() / library.max(1e-300));
        if !s.converged || s.iterations > 25_000 || eta > 1e-6 * (1.0 + 1e-9) {
            failures.push(format!("{} (eta {eta:.2e}, {} iterations)", r.label, s.iterations));
        }
    }
    line(
        5,
        failures.is_empty() && total_s <= 600.0,
        format!(
            "{} runs, {} failed {:?}, independent recomputation max relative mismatch {worst_mismatch:.1e}, {total_s:.1}s",
            runs.len(),
            failures.len(),
            failures
        ),
    )
}

fn trend(runs: &[BiqRun]) -> Line {
    let mut bad = Vec::new();
    let mut checked = 0;
    for r in runs.iter().filter(|r| r.run.summary.converged) {
        checked += 1;
        match &r.run.summary.trend {
            Some(t) if t.decreasing => {}
            Some(t) => bad.push(format!("{} ({:.2e} > {:.2e})", r.label, t.final_value, t.tenth_value)),
            None => bad.push(format!("{} (no trend)", r.label)),
        }
    }
    line(
        6,
        bad.is_empty() && checked > 0,
        format!("{checked} converged runs, final k*min D <= value at k/10 on all but {:?}", bad),
    )
}

fn preconditioner() -> Line {
    let mut r = rng(1007);
    let mut worst: f64 = 0.0;
    let mut max_iters = 0;
    let mut pcg_ok = true;
    for (t, n) in [5usize, 12, 20, 33, 50].into_iter().enumerate() {
        let v = random_psd(&mut r, n, n, 0.5);
        let eig = SymmetricEigen::new(v.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for l in 0..=3 {
            let sigma = 0.5 + t as f64;
            let tail = eig.eigenvalues[order[l]];
            let mut tm = DMatrix::zeros(n, n);
            for &k in &order[l + 1..] {
                let p = eig.eigenvectors.column(k);
                tm += (&p * p.transpose()) * (sigma * (tail - eig.eigenvalues[k]));
            }
            let dense_inv = (&v * sigma + tm).try_inverse().unwrap();
            let prox = build_truncated_prox(&v, l, sigma).unwrap();
            let mut closed = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                closed.set_column(j, &prox.apply_inverse(&e));
            }
            worst = worst.max((&closed - &dense_inv).norm() / dense_inv.norm());

            // leading l eigenvalues distinct, the rest one cluster
            let mut vals: Vec<f64> = (0..n).map(|_| 1.0).collect();
            for (k, val) in vals.iter_mut().enumerate().take(l) {
                *val = 10.0 + 3.0 * k as f64;
            }
            let q = eig.eigenvectors.clone();
            let vc = &q * DMatrix::from_diagonal(&DVector::from_vec(vals)) * q.transpose();
            let vc = (&vc + vc.transpose()) * 0.5;
            let pc = build_truncated_prox(&vc, l, sigma).unwrap();
            let rhs = random_vector(&mut r, n);
            let (x, st) = pcg_solve(|u: &DVector<f64>| &vc * u * sigma, &rhs, |u: &DVector<f64>| pc.apply_inverse(u), 1e-10, 100)
                .unwrap();
            let res = (&vc * &x * sigma - &rhs).norm() / rhs.norm().max(1.0);
            max_iters = max_iters.max(st.iterations);
            pcg_ok &= st.converged && st.iterations <= l + 2 && res <= 1e-10;
        }
    }
    line(
        7,
        worst <= 1e-10 && pcg_ok,
        format!("closed-form inverse max relative error {worst:.2e}; clustered PCG max {max_iters} iterations (limit l+2)"),
    )
}

fn duality_gap(runs: &[BiqRun]) -> Line {
    let mut gap_fail = Vec::new();
    let mut weak_fail = 0usize;
    let mut weak_total = 0usize;
    let mut weak_runs = Vec::new();
    let mut worst_weak = f64::INFINITY;
    let mut final_weak = 0;
    for r in runs.iter().filter(|r| r.run.summary.converged) {
        let g = r.run.summary.eta_gap;
        if g.abs() > 1e-5 {
            gap_fail.push(format!("{} ({g:.2e})", r.label));
        }
        final_weak += usize::from(g < -1e-8);
        // obj_dual <= obj_primal + 1e-8 (1 + |obj_primal| + |obj_dual|)
        // is eta_gap >= -1e-8
        let mut failed_here = 0;
        for rec in &r.run.records {
            weak_total += 1;
            worst_weak = worst_weak.min(rec.eta_gap);
            if rec.eta_gap < -1e-8 {
                failed_here += 1;
            }
        }
        if failed_here > 0 {
            weak_runs.push(r.label.clone());
        }
        weak_fail += failed_here;
    }
    line(
        8,
        gap_fail.is_empty() && weak_fail == 0,
        format!(
            "|eta_gap| > 1e-5 at termination: {:?}; weak duality violated at {weak_fail} of {weak_total} logged iterates in {} runs, {final_weak} of them at termination (most negative relative gap {worst_weak:.2e})",
            gap_fail,
            weak_runs.len()
        ),
    )
}

fn steplength() -> Line {
    let c = steplength_constants(1.0f64).unwrap();
    let exact = (c.alpha - 0.75).abs() < 1e-15 && (c.alpha_hat - 0.25).abs() < 1e-15 && (c.beta - 0.5).abs() < 1e-15;
    let mut min_beta = f64::INFINITY;
    let mut all_ok = true;
    for i in 1..=100 {
        let tau = GOLDEN_RATIO * i as f64 / 101.0;
        match steplength_constants(tau) {
            Ok(c) => {
                min_beta = min_beta.min(c.beta);
                all_ok &= c.beta > 0.0;
            }
            Err(_) => all_ok = false,
        }
    }
    line(
        9,
        exact && all_ok,
        format!(
            "tau=1: alpha={} alpha_hat={} beta={}; 100-point grid min beta {min_beta:.3e}",
            c.alpha, c.alpha_hat, c.beta
        ),
    )
}

fn comparison() -> Line {
    let problem = biq_problem(16, BiqVariant::Linear);
    match compare(&problem, &RunOptions::default()) {
        Ok((summary, sgs, direct)) => {
            println!("  {}", summary.ratio_line());
            let ok = sgs.summary.converged
                && direct.summary.converged
                && sgs.summary.eta_qsdp <= 1e-6
                && direct.summary.eta_qsdp <= 1e-6;
            line(
                10,
                ok,
                format!(
                    "n=16 linear: sgs-imspadmm eta {:.2e}, spadmm-direct eta {:.2e}, iteration ratio {:.3}",
                    sgs.summary.eta_qsdp, direct.summary.eta_qsdp, summary.iteration_ratio
                ),
            )
        }
        Err(e) => line(10, false, format!("compare failed: {e}")),
    }
}

fn skip_rule(runs: &[BiqRun]) -> Line {
    let mut bad = Vec::new();
    let mut min_skipped = usize::MAX;
    let mut worst_ratio: f64 = 0.0;
    for r in runs {
        let s = &r.run.summary;
        min_skipped = min_skipped.min(s.skipped);
        let ratio = s.max_certificate_ratio.unwrap_or(f64::INFINITY);
        worst_ratio = worst_ratio.max(ratio);
        if s.skipped == 0 || !s.audit_passed || ratio > 1.0 {
            bad.push(r.label.clone());
        }
    }
    line(
        11,
        bad.is_empty(),
        format!(
            "skip_factor=1: fewest skipped steps in a run {min_skipped}, max certificate/bound {worst_ratio:.3}, failing runs {:?}",
            bad
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut lines = vec![sgs_exact(), sgs_inexact(), error_propagation(), hat_reduction()];
    println!("criterion 5 runs:");
    let (runs, biq_s) = biq_runs();
    lines.push(convergence(&runs, biq_s));
    lines.push(trend(&runs));
    lines.push(preconditioner());
    lines.push(duality_gap(&runs));
    lines.push(steplength());
    lines.push(comparison());
    lines.push(skip_rule(&runs));
    lines.sort_by_key(|l| l.id);
    println!();
    for l in &lines {
        println!("criterion {:2}: {} - {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!(
        "\n{} of {} criteria passed in {:.1}s",
        lines.len() - failed,
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
