//! Experiment plumbing: problem and iterate files, iteration logs, the
//! QSDP runner for both algorithms, and convergence diagnostics.

mod format;
mod records;
mod run;

pub use format::{
    load_iterate, load_problem, save_iterate, save_problem, BoxFile, IterateFile, ProblemFile, QFile, FORMAT_VERSION,
};
pub use records::{read_csv, write_csv, IterationRecord, CSV_COLUMNS};
pub use run::{
    compare, diagnose, phi_potential, run_qsdp, Algorithm, CompareSummary, DiagnoseRecord, QsdpRun, RunOptions,
    SolveSummary,
};

use nalgebra::DVector;

use crate::admm::{constraint_residual, map_apply, CompositeProblem, IterateState, Side};
use crate::blockops::BlockVector;
use crate::error::Result;
use crate::scalar::Real;

/// Coordinates within this distance of a bound (or eigenvalues within this
/// relative distance of zero) count as active when measuring `D(w)`.
pub const ACTIVE_TOL: f64 = 1e-9;

fn group_distance_sq<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    side: Side,
    u: &BlockVector<T>,
    z: &DVector<T>,
) -> Result<T> {
    let mut g = problem.gradient(side, u);
    *g.data_mut() += map_apply(problem, side, z).data();
    let part = problem.partition(side);
    let mut acc = T::zero();
    for i in 0..part.num_blocks() {
        let d = problem
            .block_spec(side, i)
            .subdifferential_distance(&u.block_owned(i), &(-g.block_owned(i)), T::lit(ACTIVE_TOL))?;
        acc += d * d;
    }
    Ok(acc)
}

/// `D(w) = dist^2(0, F(w)) + dist^2(0, G(w)) + ||A^* x + B^* y - c||^2` with
/// `F(w) = partial p(x) + grad f(x) + A z` and `G` likewise.
pub fn kkt_distance<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, state: &IterateState<T>) -> Result<T> {
    let fx = group_distance_sq(problem, Side::X, &state.x, &state.z)?;
    let gy = group_distance_sq(problem, Side::Y, &state.y, &state.z)?;
    let r = constraint_residual(problem, &state.x, &state.y);
    Ok(fx + gy + r.norm_squared())
}

/// The series `k * min_{i <= k} D_i` and whether it ends below its value at
/// `k / 10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    pub series: Vec<f64>,
    pub final_value: f64,
    pub tenth_value: f64,
    pub decreasing: bool,
}

/// `values[i - 1] = D_i` for `i = 1..=k`.
pub fn complexity_trend(values: &[f64]) -> Option<Trend> {
    if values.is_empty() {
        return None;
    }
    let mut best = f64::INFINITY;
    let series: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            best = best.min(d);
            (i + 1) as f64 * best
        })
        .collect();
    let k = series.len();
    let tenth = (k / 10).max(1);
    let final_value = series[k - 1];
    let tenth_value = series[tenth - 1];
    Some(Trend {
        decreasing: final_value <= tenth_value,
        series,
        final_value,
        tenth_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::TwoBlockProblem;
    use crate::blockops::BlockPartition;
    use crate::prox::SimpleFunctionSpec;
    use std::sync::Arc;

    #[test]
    fn trend_examples() {
        let flat = complexity_trend(&[1.0; 100]).unwrap();
        assert!(!flat.decreasing);
        assert_eq!(flat.final_value, 100.0);
        let d: Vec<f64> = (1..=200).map(|i| 1.0 / (i as f64).powi(2)).collect();
        let t = complexity_trend(&d).unwrap();
        for (i, s) in t.series.iter().enumerate() {
            assert!((s - 1.0 / (i + 1) as f64).abs() < 1e-15);
        }
        assert!(t.decreasing);
        assert!(complexity_trend(&[]).is_none());
    }

    /// `min delta_+(x) + 1/2 y^2  s.t.  x + y = 1`: the solution is `x = 1`,
    /// `y = 0`, `z = 0`.
    fn scalar_problem() -> TwoBlockProblem<f64> {
        use crate::admm::QuadraticTerm;
        use nalgebra::DMatrix;
        let p = Arc::new(BlockPartition::single(1).unwrap());
        TwoBlockProblem::new(
            p.clone(),
            p,
            SimpleFunctionSpec::Nonneg,
            SimpleFunctionSpec::Zero,
            QuadraticTerm::zero(1),
            QuadraticTerm::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap(),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    fn point(p: &TwoBlockProblem<f64>, x: f64, y: f64, z: f64) -> IterateState<f64> {
        let px = p.partition(Side::X).clone();
        let py = p.partition(Side::Y).clone();
        IterateState::from_parts(
            p,
            BlockVector::from_data(&px, DVector::from_element(1, x)).unwrap(),
            BlockVector::from_data(&py, DVector::from_element(1, y)).unwrap(),
            DVector::from_element(1, z),
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        let p = scalar_problem();
        assert_eq!(kkt_distance(&p, &point(&p, 1.0, 0.0, 0.0)).unwrap(), 0.0);
        // feasible, x interior: F = {z}, G = {y + z}
        let w = point(&p, 0.7, 0.3, 0.1);
        let d = kkt_distance(&p, &w).unwrap();
        assert!((d - (0.01 + 0.16)).abs() < 1e-15);
        assert_eq!(d, kkt_distance(&p, &w).unwrap());
        // x at its bound: the normal cone absorbs a positive multiplier
        let w = point(&p, 0.0, 1.0, 0.5);
        assert!((kkt_distance(&p, &w).unwrap() - 1.5 * 1.5).abs() < 1e-15);
    }
}
