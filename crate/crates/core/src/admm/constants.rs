use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{dense_adjoint, dense_minorizer, CompositeProblem, Side, GOLDEN_RATIO};
use crate::blockops::{sgs_matrix, BlockMap, BlockOperator, BlockPartition, BlockVector};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// `alpha`, `alpha_hat`, `beta` of the step-length analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstants<T> {
    pub tau: T,
    pub alpha: T,
    pub alpha_hat: T,
    pub beta: T,
}

impl<T: Real> StepConstants<T> {
    /// Coefficient of `sigma A A^*` in `F = 1/2 Sigma_f + S + c A A^*`.
    pub fn f_weight(&self, sigma: T) -> T {
        (T::one() - self.alpha) * sigma * T::lit(0.5)
    }

    /// Coefficient of `sigma B B^*` in `G = 1/2 Sigma_g + T + c B B^*`.
    pub fn g_weight(&self, sigma: T) -> T {
        let t = self.tau;
        t.min(T::one() + t - t * t) * self.alpha * sigma
    }
}

pub fn steplength_constants<T: Real>(tau: T) -> Result<StepConstants<T>> {
    let one = T::one();
    if !(tau > T::zero()) || tau >= T::lit(GOLDEN_RATIO) {
        return Err(Error::Domain(format!(
            "step length {} outside (0, (1 + sqrt 5)/2)",
            tau.to_f64_lossy()
        )));
    }
    let half = T::lit(0.5);
    let inv = one / tau;
    let alpha = (one + tau / (one + tau).min(one + inv)) * half;
    let alpha_hat = one - alpha * tau.min(inv);
    let beta = one.min(one - tau + inv) * alpha - (one - alpha) * tau;
    if !(beta > T::zero()) {
        return Err(Error::Contract(format!(
            "beta = {:e} is not positive at tau = {}",
            beta.to_f64_lossy(),
            tau.to_f64_lossy()
        )));
    }
    Ok(StepConstants {
        tau,
        alpha,
        alpha_hat,
        beta,
    })
}

/// `M_tilde`, `S_hat` and `M_hat` of the sGS construction.
#[derive(Debug, Clone)]
pub struct SgsProximal<T: Real> {
    pub m_tilde: BlockOperator<T>,
    pub s_hat: DMatrix<T>,
    pub m_hat: DMatrix<T>,
}

/// `M_tilde = Sigma_hat + sigma A A^* + Diag(S_tilde)`, `S_hat = Diag(S_tilde) +
/// sGS(M_tilde)`, `M_hat = M_tilde + sGS(M_tilde)`.
///
/// `a_adj` is the matrix of `A^*` (constraint rows by variable columns).
pub fn build_sgs_proximal<T: Real>(
    partition: &Arc<BlockPartition>,
    sigma_hat: &DMatrix<T>,
    a_adj: &DMatrix<T>,
    sigma: T,
    s_tilde: &[DMatrix<T>],
) -> Result<SgsProximal<T>> {
    let n = partition.total();
    check_dim("majorizer order", n, sigma_hat.nrows())?;
    check_dim("linear map columns", n, a_adj.ncols())?;
    check_dim("proximal block count", partition.num_blocks(), s_tilde.len())?;
    let mut diag_s = DMatrix::zeros(n, n);
    for (i, s) in s_tilde.iter().enumerate() {
        let r = partition.range(i);
        check_dim("proximal block order", r.len(), s.nrows())?;
        diag_s.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(s);
    }
    let m = sigma_hat + a_adj.transpose() * a_adj * sigma + &diag_s;
    let m = (&m + m.transpose()) * T::lit(0.5);
    let m_tilde = BlockOperator::new_symmetric(m, partition)?;
    m_tilde.check_diagonal_definite()?;
    let sgs = sgs_matrix(&m_tilde)?;
    Ok(SgsProximal {
        s_hat: diag_s + &sgs,
        m_hat: m_tilde.matrix() + sgs,
        m_tilde,
    })
}

/// [`build_sgs_proximal`] applied to the dense mirrors of one group of
/// `problem`.
pub fn sgs_proximal_of<T: Real, P: CompositeProblem<T> + ?Sized>(problem: &P, side: Side, sigma: T) -> Result<SgsProximal<T>> {
    let part = problem.partition(side);
    let prox = super::dense_proximal(problem, side, sigma);
    let blocks: Vec<DMatrix<T>> = (0..part.num_blocks())
        .map(|i| {
            let r = part.range(i);
            prox.view((r.start, r.start), (r.len(), r.len())).into_owned()
        })
        .collect();
    build_sgs_proximal(
        part,
        &super::dense_majorizer(problem, side),
        &dense_adjoint(problem, side),
        sigma,
        &blocks,
    )
}

fn lambda_max<T: Real>(m: DMatrix<T>) -> T {
    SymmetricEigen::new((&m + m.transpose()) * T::lit(0.5)).eigenvalues.max()
}

fn lambda_min<T: Real>(m: DMatrix<T>) -> T {
    SymmetricEigen::new((&m + m.transpose()) * T::lit(0.5)).eigenvalues.min()
}

/// `kappa = 2 sqrt(m-1) ||M_d^{-1/2}|| + sqrt(m) ||M_d^{1/2} (M_d + M_u)^{-1}||`.
pub fn kappa_constants<T: Real>(m_tilde: &BlockOperator<T>) -> Result<T> {
    let p = m_tilde.partition();
    let s = p.num_blocks();
    let n = p.total();
    let mut min_diag = T::infinity();
    for i in 0..s {
        min_diag = min_diag.min(lambda_min(m_tilde.block(i, i).into_owned()));
    }
    if min_diag <= T::zero() {
        return Err(Error::Indefinite {
            context: "diagonal blocks of M_tilde",
            value: min_diag.to_f64_lossy(),
        });
    }
    let inv_sqrt = T::one() / min_diag.sqrt();
    let mut k = DMatrix::zeros(n, n);
    let mut e = BlockVector::zeros(p);
    for j in 0..n {
        e.data_mut()[j] = T::one();
        k.set_column(j, m_tilde.upper_solve(&e)?.data());
        e.data_mut()[j] = T::zero();
    }
    let mut md = DMatrix::zeros(n, n);
    for i in 0..s {
        let r = p.range(i);
        md.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&m_tilde.block(i, i));
    }
    let g = k.transpose() * md * &k;
    let second = lambda_max(g).max(T::zero()).sqrt();
    let m = T::lit(s as f64);
    Ok(T::lit(2.0) * (m - T::one()).sqrt() * inv_sqrt + m.sqrt() * second)
}

/// Outcome of the positive-definiteness checks the step length must pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FgReport<T> {
    pub constants: StepConstants<T>,
    /// Smallest eigenvalue of `Sigma_f + S + sigma A A^*`.
    pub x_min: T,
    /// Smallest eigenvalue of `Sigma_g + T + sigma B B^*`.
    pub y_min: T,
    pub f_min: T,
    pub g_min: T,
    pub pass: bool,
}

/// Checks `Sigma_f + S + sigma A A^* > 0` and `Sigma_g + T + sigma B B^* > 0`
/// and reports the smallest eigenvalues of `F` and `G`.
pub fn check_fg_pd<T: Real, P: CompositeProblem<T> + ?Sized>(
    problem: &P,
    sigma: T,
    tau: T,
    s: &DMatrix<T>,
    t: &DMatrix<T>,
) -> Result<FgReport<T>> {
    let constants = steplength_constants(tau)?;
    let half = T::lit(0.5);
    let sf = dense_minorizer(problem, Side::X);
    let sg = dense_minorizer(problem, Side::Y);
    let a = dense_adjoint(problem, Side::X);
    let b = dense_adjoint(problem, Side::Y);
    check_dim("S order", sf.nrows(), s.nrows())?;
    check_dim("T order", sg.nrows(), t.nrows())?;
    let aa = a.transpose() * &a;
    let bb = b.transpose() * &b;
    let hx = &sf + s + &aa * sigma;
    let hy = &sg + t + &bb * sigma;
    let x_min = lambda_min(hx.clone());
    let y_min = lambda_min(hy.clone());
    let f_min = lambda_min(&sf * half + s + &aa * constants.f_weight(sigma));
    let g_min = lambda_min(&sg * half + t + &bb * constants.g_weight(sigma));
    let tol = T::lit(1e-10);
    let pass = x_min > tol * hx.amax().max(T::one()) && y_min > tol * hy.amax().max(T::one());
    Ok(FgReport {
        constants,
        x_min,
        y_min,
        f_min,
        g_min,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_block_psd, random_matrix, rng};

    #[test]
    fn steplength_examples() {
        let c = steplength_constants(1.0f64).unwrap();
        assert!((c.alpha - 0.75).abs() < 1e-15);
        assert!((c.alpha_hat - 0.25).abs() < 1e-15);
        assert!((c.beta - 0.5).abs() < 1e-15);
        let h = steplength_constants(0.5f64).unwrap();
        assert!((h.alpha - 2.0 / 3.0).abs() < 1e-15);
        assert!((h.alpha_hat - 2.0 / 3.0).abs() < 1e-15);
        assert!((h.beta - 0.5).abs() < 1e-15);
        let g = steplength_constants(1.618f64).unwrap();
        assert!(g.beta > 0.0 && g.beta < 1e-3);
        assert!(steplength_constants(GOLDEN_RATIO).is_err());
        assert!(steplength_constants(0.0f64).is_err());
    }

    #[test]
    fn sgs_proximal_examples() {
        let p = Arc::new(BlockPartition::new(vec![1, 1]).unwrap());
        // sigma A A^* = [[2,1],[1,2]] with A^* = L^T for the Cholesky factor L
        let target = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let l = target.clone().cholesky().unwrap().l();
        let out = build_sgs_proximal(&p, &DMatrix::zeros(2, 2), &l.transpose(), 1.0, &[DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.5, 1.0, 1.0, 2.0]);
        assert!((out.m_hat - want).amax() < 1e-14);

        let single = Arc::new(BlockPartition::single(3).unwrap());
        let mut r = rng(2);
        let a = random_matrix(&mut r, 4, 3);
        let out = build_sgs_proximal(&single, &DMatrix::zeros(3, 3), &a, 2.0, &[DMatrix::identity(3, 3)]).unwrap();
        assert!((out.m_hat - out.m_tilde.matrix()).amax() < 1e-15);
    }

    #[test]
    fn m_hat_is_positive_definite_randomly() {
        let mut r = rng(3);
        let p = Arc::new(BlockPartition::new(vec![2, 3, 1]).unwrap());
        let sh = random_block_psd(&mut r, &[2, 3, 1]).into_matrix();
        let a = random_matrix(&mut r, 4, 6);
        let st: Vec<DMatrix<f64>> = [2, 3, 1].iter().map(|&k| DMatrix::identity(k, k) * 0.1).collect();
        let out = build_sgs_proximal(&p, &sh, &a, 1.5, &st).unwrap();
        assert!(lambda_min(out.m_hat) > 0.0);
    }

    #[test]
    fn kappa_examples() {
        let p = Arc::new(BlockPartition::new(vec![1, 1]).unwrap());
        let id = BlockOperator::<f64>::identity(&p);
        let k: f64 = kappa_constants(&id).unwrap();
        assert!((k - (2.0 + 2f64.sqrt())).abs() < 1e-12);
        let single = Arc::new(BlockPartition::single(2).unwrap());
        let m = BlockOperator::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0])), &single).unwrap();
        // ||M^{1/2} M^{-1}|| = ||M^{-1/2}|| = 1/2
        let k: f64 = kappa_constants(&m).unwrap();
        assert!((k - 0.5).abs() < 1e-12);
    }
}
