use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use sgs_admm::admm::EpsSchedule;
use sgs_admm::harness::{
    compare, diagnose, load_iterate, load_problem, run_qsdp, save_iterate, save_problem, write_csv, Algorithm,
    IterationRecord, QsdpRun, RunOptions,
};
use sgs_admm::qsdp::{random_biq, BiqVariant, QsdpProblem, WSolver};
use sgs_admm::random::rng;
use sgs_admm::Error;

#[derive(Parser)]
#[command(name = "sgs-admm", version, about = "sGS-imsPADMM for convex QSDP and linear SDP duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write a JSON summary and a CSV iteration log.
    Solve {
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::SgsImspadmm)]
        algorithm: AlgorithmArg,
        /// CSV iteration log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// JSON summary; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final primal-dual iterate here.
        #[arg(long)]
        save_iterate: Option<PathBuf>,
    },
    /// Write a random BIQ relaxation to a problem file.
    GenerateBiq {
        #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = VariantArg::Linear)]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run sGS-imsPADMM and the directly extended sPADMM on one problem.
    Compare {
        #[command(flatten)]
        solver: SolverArgs,
        /// Log prefix; writes `<prefix>-<algorithm>.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track D(w), its trend and the potential phi_k at fixed sigma.
    Diagnose {
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::SgsImspadmm)]
        algorithm: AlgorithmArg,
        /// Reference primal-dual point; when absent a solve at tolerance
        /// `--reference-tol` (with `eps0 = 0.01 * reference-tol`) supplies it.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        reference_tol: f64,
        /// CSV of the diagnostic records; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 25_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.618)]
    tau: f64,
    /// Allow tau up to 1.95 with the summability monitor.
    #[arg(long)]
    unsafe_tau: bool,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Adapt sigma to balance primal and dual infeasibility.
    #[arg(long)]
    adapt_sigma: bool,
    /// First inner tolerance; defaults to 1e-3 (1 + ||c||).
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    skip_factor: f64,
    /// Rank l of the truncated-eigenvalue preconditioner.
    #[arg(long, default_value_t = sgs_admm::subsolve::DEFAULT_RANK)]
    rank: usize,
    #[arg(long, value_enum, default_value_t = WSolverArg::Pcg)]
    w_solver: WSolverArg,
    /// Skip the dense certificate audit.
    #[arg(long)]
    no_audit: bool,
    /// Skip D(w) in the iteration log.
    #[arg(long)]
    no_dw: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    SgsImspadmm,
    SpadmmDirect,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Linear,
    Explicit,
    SymKronecker,
    Lyapunov,
}

#[derive(Clone, Copy, ValueEnum)]
enum WSolverArg {
    Pcg,
    Eigen,
    Lyapunov,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::SgsImspadmm => Algorithm::SgsImsPadmm,
            AlgorithmArg::SpadmmDirect => Algorithm::SpadmmDirect,
        }
    }
}

impl From<VariantArg> for BiqVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Linear => BiqVariant::Linear,
            VariantArg::Explicit => BiqVariant::Explicit,
            VariantArg::SymKronecker => BiqVariant::SymKron,
            VariantArg::Lyapunov => BiqVariant::Lyapunov,
        }
    }
}

/// Exit statuses beyond success.
const NOT_CONVERGED: u8 = 1;
const USAGE: u8 = 2;
const DIVERGED: u8 = 3;

struct Usage(String);

impl SolverArgs {
    fn options(&self) -> Result<RunOptions, Usage> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Usage(format!("--{name} must be positive, got {v}")))
            }
        };
        positive("tol", self.tol)?;
        positive("tau", self.tau)?;
        positive("sigma", self.sigma)?;
        if let Some(e) = self.eps0 {
            positive("eps0", e)?;
        }
        if !(self.skip_factor >= 0.0) {
            return Err(Usage(format!("--skip-factor must be nonnegative, got {}", self.skip_factor)));
        }
        let mut o = RunOptions::default();
        o.config.tol = self.tol;
        o.config.max_iter = self.max_iter;
        o.config.tau = self.tau;
        o.config.unsafe_tau = self.unsafe_tau;
        o.config.sigma = self.sigma;
        if self.adapt_sigma {
            o.config.sigma_adapt = Some(Default::default());
        }
        o.config.eps = EpsSchedule::Power {
            eps0: self.eps0,
            power: 1.2,
        };
        o.config.skip_factor = self.skip_factor;
        o.config.audit = !self.no_audit;
        o.precond_rank = self.rank;
        o.w_solver = match self.w_solver {
            WSolverArg::Pcg => WSolver::Pcg,
            WSolverArg::Eigen => WSolver::Eigen,
            WSolverArg::Lyapunov => WSolver::Lyapunov,
        };
        o.track_dw = !self.no_dw;
        o.config.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(o)
    }

    fn load(&self) -> anyhow::Result<Arc<QsdpProblem<f64>>> {
        let p = load_problem(&self.problem).with_context(|| format!("reading {}", self.problem.display()))?;
        Ok(Arc::new(p))
    }
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn write_log(path: &Path, records: &[IterationRecord]) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(BufWriter::new(f), records)?;
    Ok(())
}

fn prefixed(prefix: &Path, algorithm: Algorithm) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("-{}.csv", algorithm.name()));
    PathBuf::from(s)
}

fn converged_status(runs: &[&QsdpRun]) -> u8 {
    if runs.iter().all(|r| r.summary.converged) {
        0
    } else {
        for r in runs.iter().filter(|r| !r.summary.converged) {
            warn!(
                "{} stopped after {} iterations at eta {:.3e}",
                r.summary.algorithm.name(),
                r.summary.iterations,
                r.summary.eta_qsdp
            );
        }
        NOT_CONVERGED
    }
}

fn execute(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Solve {
            solver,
            algorithm,
            log,
            out,
            save_iterate: iterate_path,
        } => {
            let options = match solver.options() {
                Ok(o) => o,
                Err(Usage(m)) => return usage(&m),
            };
            let problem = solver.load()?;
            let run = run_qsdp(&problem, algorithm.into(), &options, |_| {})?;
            if let Some(path) = &log {
                write_log(path, &run.records)?;
            }
            if let Some(path) = &iterate_path {
                save_iterate(path, &run.iterate)?;
            }
            write_json(out.as_deref(), &run.summary)?;
            Ok(converged_status(&[&run]))
        }
        Command::GenerateBiq { n, seed, variant, out } => {
            let p = random_biq(&mut rng(seed), n as usize, variant.into())?;
            save_problem(&out, &p).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} (n = {}, m_E = {}, m_I = {})", out.display(), p.n, p.m_e(), p.m_i());
            Ok(0)
        }
        Command::Compare { solver, log, out } => {
            let options = match solver.options() {
                Ok(o) => o,
                Err(Usage(m)) => return usage(&m),
            };
            let problem = solver.load()?;
            let (summary, sgs, direct) = compare(&problem, &options)?;
            if let Some(prefix) = &log {
                write_log(&prefixed(prefix, Algorithm::SgsImsPadmm), &sgs.records)?;
                write_log(&prefixed(prefix, Algorithm::SpadmmDirect), &direct.records)?;
            }
            write_json(out.as_deref(), &summary)?;
            println!("{}", summary.ratio_line());
            Ok(converged_status(&[&sgs, &direct]))
        }
        Command::Diagnose {
            solver,
            algorithm,
            reference,
            reference_tol,
            out,
        } => {
            let options = match solver.options() {
                Ok(o) => o,
                Err(Usage(m)) => return usage(&m),
            };
            if !(reference_tol > 0.0) {
                return usage("--reference-tol must be positive");
            }
            let problem = solver.load()?;
            let reference = match &reference {
                Some(p) => load_iterate(p).with_context(|| format!("reading {}", p.display()))?,
                None => {
                    let mut tight = options.clone();
                    tight.config.tol = reference_tol;
                    // the default schedule would cap the accuracy near eps_k
                    tight.config.eps = EpsSchedule::Power {
                        eps0: Some(1e-2 * reference_tol),
                        power: 1.2,
                    };
                    tight.config.max_iter = tight.config.max_iter.max(100_000);
                    tight.track_dw = false;
                    let run = run_qsdp(&problem, Algorithm::SgsImsPadmm, &tight, |_| {})?;
                    if !run.summary.converged {
                        bail!("reference solve stopped at eta {:.3e}", run.summary.eta_qsdp);
                    }
                    run.iterate
                }
            };
            let rows = diagnose(&problem, algorithm.into(), &options, &reference)?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(BufWriter::new(
                    File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => Box::new(std::io::stdout().lock()),
            };
            let mut w = csv::Writer::from_writer(sink);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            let converged = rows.last().is_some_and(|r| r.eta_qsdp <= options.config.tol);
            Ok(if converged { 0 } else { NOT_CONVERGED })
        }
    }
}

fn usage(message: &str) -> anyhow::Result<u8> {
    eprintln!("error: {message}\n\nFor more information, try '--help'.");
    Ok(USAGE)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::Divergence { .. }) => DIVERGED,
                _ => NOT_CONVERGED,
            };
            ExitCode::from(code)
        }
    }
}
