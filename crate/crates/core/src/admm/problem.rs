use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::{CompositeProblem, Side};
use crate::blockops::{BlockPartition, BlockVector, PSD_TOL};
use crate::error::{check_dim, Error, Result};
use crate::prox::SimpleFunctionSpec;
use crate::scalar::Real;

/// `f(x) = 1/2 <x, H x> + <l, x>` with majorizer `Sigma_hat` and minorizer
/// `Sigma` satisfying `Sigma <= H <= Sigma_hat`.
#[derive(Debug, Clone)]
pub struct QuadraticTerm<T: Real> {
    pub hessian: DMatrix<T>,
    pub linear: DVector<T>,
    pub majorizer: DMatrix<T>,
    pub minorizer: DMatrix<T>,
}

impl<T: Real> QuadraticTerm<T> {
    /// Exact majorization: `Sigma = Sigma_hat = H`.
    pub fn new(hessian: DMatrix<T>, linear: DVector<T>) -> Result<Self> {
        check_dim("quadratic term linear part", hessian.nrows(), linear.len())?;
        require_psd(&hessian, "quadratic term hessian")?;
        Ok(Self {
            majorizer: hessian.clone(),
            minorizer: hessian.clone(),
            hessian,
            linear,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            hessian: DMatrix::zeros(n, n),
            linear: DVector::zeros(n),
            majorizer: DMatrix::zeros(n, n),
            minorizer: DMatrix::zeros(n, n),
        }
    }

    /// Replaces `Sigma_hat`; requires `Sigma_hat - H` to be PSD.
    pub fn with_majorizer(mut self, majorizer: DMatrix<T>) -> Result<Self> {
        check_dim("majorizer order", self.hessian.nrows(), majorizer.nrows())?;
        require_psd(&(&majorizer - &self.hessian), "majorizer minus hessian")?;
        self.majorizer = majorizer;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, x: &DVector<T>) -> T {
        (self.hessian.clone() * x).dot(x) * T::lit(0.5) + self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        &self.hessian * x + &self.linear
    }
}

fn require_psd<T: Real>(m: &DMatrix<T>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Structural(format!("{context} must be square")));
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let lmin = SymmetricEigen::new(sym).eigenvalues.min();
    if lmin < -T::lit(PSD_TOL) * m.amax().max(T::one()) {
        return Err(Error::Indefinite {
            context,
            value: lmin.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Block semi-proximal term `S_tilde_i`.
#[derive(Debug, Clone)]
pub enum ProxTerm<T: Real> {
    None,
    Scaled(T),
    Matrix(DMatrix<T>),
    /// `lambda_max(B) I - B` with `B = Sigma_hat_ii + sigma A_i A_i^*`, making
    /// `M_tilde_ii` a multiple of the identity.
    Linearize,
}

/// A dense two-group problem
///
/// ```text
/// min p(x_1) + f(x) + q(y_1) + g(y)   s.t.  A^* x + B^* y = c
/// ```
///
/// with quadratic `f`, `g`. `a_adj` and `b_adj` are the matrices of `A^*`
/// and `B^*`.
#[derive(Debug, Clone)]
pub struct TwoBlockProblem<T: Real> {
    pub x_partition: Arc<BlockPartition>,
    pub y_partition: Arc<BlockPartition>,
    pub p: SimpleFunctionSpec<T>,
    pub q: SimpleFunctionSpec<T>,
    pub f: QuadraticTerm<T>,
    pub g: QuadraticTerm<T>,
    pub a_adj: DMatrix<T>,
    pub b_adj: DMatrix<T>,
    pub c: DVector<T>,
    pub x_prox: Vec<ProxTerm<T>>,
    pub y_prox: Vec<ProxTerm<T>>,
    zero: SimpleFunctionSpec<T>,
}

impl<T: Real> TwoBlockProblem<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_partition: Arc<BlockPartition>,
        y_partition: Arc<BlockPartition>,
        p: SimpleFunctionSpec<T>,
        q: SimpleFunctionSpec<T>,
        f: QuadraticTerm<T>,
        g: QuadraticTerm<T>,
        a_adj: DMatrix<T>,
        b_adj: DMatrix<T>,
        c: DVector<T>,
    ) -> Result<Self> {
        check_dim("f dimension", x_partition.total(), f.dim())?;
        check_dim("g dimension", y_partition.total(), g.dim())?;
        check_dim("A^* columns", x_partition.total(), a_adj.ncols())?;
        check_dim("B^* columns", y_partition.total(), b_adj.ncols())?;
        check_dim("A^* rows", c.len(), a_adj.nrows())?;
        check_dim("B^* rows", c.len(), b_adj.nrows())?;
        p.validate(x_partition.size(0))?;
        q.validate(y_partition.size(0))?;
        let x_prox = vec![ProxTerm::None; x_partition.num_blocks()];
        let y_prox = vec![ProxTerm::None; y_partition.num_blocks()];
        Ok(Self {
            x_partition,
            y_partition,
            p,
            q,
            f,
            g,
            a_adj,
            b_adj,
            c,
            x_prox,
            y_prox,
            zero: SimpleFunctionSpec::Zero,
        })
    }

    pub fn with_prox(mut self, side: Side, i: usize, term: ProxTerm<T>) -> Self {
        match side {
            Side::X => self.x_prox[i] = term,
            Side::Y => self.y_prox[i] = term,
        }
        self
    }

    fn parts(&self, side: Side) -> (&Arc<BlockPartition>, &QuadraticTerm<T>, &DMatrix<T>, &[ProxTerm<T>]) {
        match side {
            Side::X => (&self.x_partition, &self.f, &self.a_adj, &self.x_prox),
            Side::Y => (&self.y_partition, &self.g, &self.b_adj, &self.y_prox),
        }
    }

    /// `Sigma_hat_ii + sigma A_i A_i^*` as a dense matrix.
    pub fn coupled_diagonal(&self, side: Side, i: usize, sigma: T) -> DMatrix<T> {
        let (p, quad, adj, _) = self.parts(side);
        let r = p.range(i);
        let ai = adj.columns(r.start, r.len());
        quad.majorizer.view((r.start, r.start), (r.len(), r.len())) + ai.transpose() * ai * sigma
    }

    /// Dense `Diag(S_tilde_i)` for one side.
    pub fn proximal_matrix(&self, side: Side, i: usize, sigma: T) -> DMatrix<T> {
        let (p, _, _, prox) = self.parts(side);
        let k = p.size(i);
        match &prox[i] {
            ProxTerm::None => DMatrix::zeros(k, k),
            ProxTerm::Scaled(t) => DMatrix::identity(k, k) * *t,
            ProxTerm::Matrix(m) => m.clone(),
            ProxTerm::Linearize => {
                let b = self.coupled_diagonal(side, i, sigma);
                let sym = (&b + b.transpose()) * T::lit(0.5);
                let lmax = SymmetricEigen::new(sym.clone()).eigenvalues.max();
                DMatrix::identity(k, k) * lmax - sym
            }
        }
    }

    pub fn objective(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        self.f.value(x) + self.g.value(y)
    }

    /// Random instance with PSD quadratics, well-conditioned maps, `p` and
    /// `q` on the first blocks and linearized first blocks when they carry a
    /// nonsmooth term.
    pub fn random<R: Rng>(
        rng: &mut R,
        x_sizes: &[usize],
        y_sizes: &[usize],
        z_dim: usize,
        p: SimpleFunctionSpec<T>,
        q: SimpleFunctionSpec<T>,
    ) -> Result<Self> {
        let xp = Arc::new(BlockPartition::new(x_sizes.to_vec())?);
        let yp = Arc::new(BlockPartition::new(y_sizes.to_vec())?);
        let nx = xp.total();
        let ny = yp.total();
        let cast = |m: DMatrix<f64>| m.map(T::lit);
        let castv = |v: DVector<f64>| v.map(T::lit);
        let hf = cast(crate::random::random_psd(rng, nx, nx.max(2) / 2, 0.1));
        let hg = cast(crate::random::random_psd(rng, ny, ny.max(2) / 2, 0.1));
        let f = QuadraticTerm::new(hf, castv(crate::random::random_vector(rng, nx)))?;
        let g = QuadraticTerm::new(hg, castv(crate::random::random_vector(rng, ny)))?;
        let a = cast(crate::random::random_matrix(rng, z_dim, nx));
        let b = cast(crate::random::random_matrix(rng, z_dim, ny));
        let c = castv(crate::random::random_vector(rng, z_dim));
        let p_zero = p.is_zero();
        let q_zero = q.is_zero();
        let mut out = Self::new(xp, yp, p, q, f, g, a, b, c)?;
        if !p_zero {
            out.x_prox[0] = ProxTerm::Linearize;
        }
        if !q_zero {
            out.y_prox[0] = ProxTerm::Linearize;
        }
        Ok(out)
    }
}

impl<T: Real> CompositeProblem<T> for TwoBlockProblem<T> {
    fn partition(&self, side: Side) -> &Arc<BlockPartition> {
        self.parts(side).0
    }

    fn z_dim(&self) -> usize {
        self.c.len()
    }

    fn c(&self) -> &DVector<T> {
        &self.c
    }

    fn block_spec(&self, side: Side, i: usize) -> &SimpleFunctionSpec<T> {
        match (side, i) {
            (Side::X, 0) => &self.p,
            (Side::Y, 0) => &self.q,
            _ => &self.zero,
        }
    }

    fn gradient(&self, side: Side, u: &BlockVector<T>) -> BlockVector<T> {
        let quad = self.parts(side).1;
        u.map_data(|d| quad.gradient(d))
    }

    fn majorizer_block(&self, side: Side, i: usize, j: usize, v: &DVector<T>) -> DVector<T> {
        let (p, quad, _, _) = self.parts(side);
        let ri = p.range(i);
        let rj = p.range(j);
        quad.majorizer.view((ri.start, rj.start), (ri.len(), rj.len())) * v
    }

    fn minorizer_apply(&self, side: Side, u: &BlockVector<T>) -> BlockVector<T> {
        let quad = self.parts(side).1;
        u.map_data(|d| &quad.minorizer * d)
    }

    fn adjoint_block(&self, side: Side, i: usize, v: &DVector<T>) -> DVector<T> {
        let (p, _, adj, _) = self.parts(side);
        let r = p.range(i);
        adj.columns(r.start, r.len()) * v
    }

    fn map_block(&self, side: Side, i: usize, z: &DVector<T>) -> DVector<T> {
        let (p, _, adj, _) = self.parts(side);
        let r = p.range(i);
        adj.columns(r.start, r.len()).tr_mul(z)
    }

    fn proximal_block(&self, side: Side, i: usize, v: &DVector<T>, sigma: T) -> DVector<T> {
        match &self.parts(side).3[i] {
            ProxTerm::None => DVector::zeros(v.len()),
            ProxTerm::Scaled(t) => v * *t,
            ProxTerm::Matrix(m) => m * v,
            ProxTerm::Linearize => self.proximal_matrix(side, i, sigma) * v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::{dense_mtilde, majorizer_apply};
    use crate::random::rng;

    #[test]
    fn linearized_block_is_scalar() {
        let mut r = rng(5);
        let prob = TwoBlockProblem::<f64>::random(&mut r, &[3, 2], &[2], 4, SimpleFunctionSpec::Nonneg, SimpleFunctionSpec::Zero).unwrap();
        let m = dense_mtilde(&prob, Side::X, 1.3).unwrap();
        let b00 = m.block(0, 0).into_owned();
        let d = b00[(0, 0)];
        assert!((b00 - DMatrix::identity(3, 3) * d).amax() < 1e-10);
    }

    #[test]
    fn majorizer_blocks_reassemble() {
        let mut r = rng(6);
        let prob = TwoBlockProblem::<f64>::random(&mut r, &[2, 2, 1], &[3], 2, SimpleFunctionSpec::Zero, SimpleFunctionSpec::Zero).unwrap();
        let u = crate::random::random_block_vector(&mut r, &prob.x_partition);
        let want = &prob.f.majorizer * u.data();
        assert!((majorizer_apply(&prob, Side::X, &u).into_data() - want).amax() < 1e-13);
    }

    #[test]
    fn majorizer_must_dominate() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let q = QuadraticTerm::new(h, DVector::zeros(2)).unwrap();
        assert!(q.clone().with_majorizer(DMatrix::identity(2, 2)).is_err());
        assert!(q.with_majorizer(DMatrix::identity(2, 2) * 2.0).is_ok());
    }
}
