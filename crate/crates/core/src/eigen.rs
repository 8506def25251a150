//! Top eigenpairs of a symmetric operator.
//!
//! Small operators are densified and handed to nalgebra's symmetric QR.
//! Larger ones go through a seeded block Lanczos iteration with full
//! reorthogonalization, Rayleigh–Ritz extraction on the whole Krylov basis
//! and thick restarts that keep the leading Ritz vectors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Instance;

/// A real symmetric linear map on `R^dim`, applied to blocks of column
/// vectors.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_block(&self, v: &DMatrix<f64>) -> DMatrix<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_block(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self * v
    }
}

impl SymmetricOperator for Instance {
    fn dim(&self) -> usize {
        Instance::dim(self)
    }

    fn apply_block(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        Instance::apply_block(self, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigMethod {
    /// Dense below `dense_cutoff`, Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Residual tolerance relative to the operator norm estimate.
    pub tol: f64,
    /// Budget of block matvecs; `None` means `50·k`.
    pub max_iter: Option<usize>,
    pub seed: u64,
    pub method: EigMethod,
    /// Largest dimension solved densely under [`EigMethod::Auto`].
    pub dense_cutoff: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: None, seed: 0, method: EigMethod::Auto, dense_cutoff: 256 }
    }
}

impl EigOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_method(mut self, method: EigMethod) -> Self {
        self.method = method;
        self
    }
}

/// Leading eigenpairs, ordered by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct Eigenspace {
    /// `N × k`, orthonormal columns.
    pub u: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    /// `‖X u_i − λ_i u_i‖` per pair, measured with a fresh operator application.
    pub residuals: Vec<f64>,
    /// Estimate of the `(k+1)`-th eigenvalue, when the solver saw one.
    pub next_lambda: Option<f64>,
    /// Block matvecs spent (0 for the dense path).
    pub iterations: usize,
}

impl Eigenspace {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Number of eigenpairs, which is also the block size `d`.
    pub fn d(&self) -> usize {
        self.u.ncols()
    }

    /// Number of `d × d` blocks stacked in `U`.
    pub fn n(&self) -> usize {
        self.u.nrows() / self.u.ncols()
    }

    /// `λ_d − λ_{d+1}`, when the next eigenvalue is known.
    pub fn gap(&self) -> Option<f64> {
        Some(self.lambdas.last()? - self.next_lambda?)
    }

    /// Rows `[j·d, (j+1)·d)` of `U`.
    pub fn block_row(&self, j: usize) -> Result<DMatrix<f64>> {
        let d = self.d();
        if self.dim() % d != 0 {
            return Err(Error::DimensionMismatch { expected: self.n() * d, found: self.dim() });
        }
        if j >= self.n() {
            return Err(Error::OutOfRange { index: j, len: self.n() });
        }
        Ok(self.u.rows(j * d, d).into_owned())
    }

    /// `U Uᵀ`, the gauge-free object when the spectrum is degenerate.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.u * self.u.transpose()
    }

    /// Writes one row per coordinate: `row,u_0,…,u_{k-1}`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.d()).map(|i| format!("u_{i}")).collect();
        writeln!(w, "row,{}", header.join(","))?;
        for r in 0..self.dim() {
            let vals: Vec<String> = self.u.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{r},{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Returns the `k` eigenpairs of largest (signed) eigenvalue.
pub fn top_eigenpairs<O: SymmetricOperator + ?Sized>(op: &O, k: usize, opts: &EigOptions) -> Result<Eigenspace> {
    let n = op.dim();
    if k == 0 || k >= n {
        return Err(Error::InvalidParams(format!("need 1 <= k < N, got k={k}, N={n}")));
    }
    let dense = match opts.method {
        EigMethod::Dense => true,
        EigMethod::Lanczos => false,
        EigMethod::Auto => n <= opts.dense_cutoff,
    };
    let (u, lambdas, next_lambda, iterations) =
        if dense { dense_top(op, k) } else { block_lanczos(op, k, opts)? };
    let residuals = residual_norms(op, &u, &lambdas);
    Ok(Eigenspace { u, lambdas, residuals, next_lambda, iterations })
}

fn residual_norms<O: SymmetricOperator + ?Sized>(op: &O, u: &DMatrix<f64>, lambdas: &[f64]) -> Vec<f64> {
    let xu = op.apply_block(u);
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| (xu.column(i) - u.column(i) * l).norm())
        .collect()
}

/// Eigen-decomposition of a small symmetric matrix, sorted descending.
pub(crate) fn sorted_symmetric_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (values, vectors)
}

/// Block steps between Rayleigh–Ritz convergence checks.
const RITZ_EVERY: usize = 4;

type Pairs = (DMatrix<f64>, Vec<f64>, Option<f64>, usize);

fn dense_top<O: SymmetricOperator + ?Sized>(op: &O, k: usize) -> Pairs {
    let n = op.dim();
    let x = op.apply_block(&DMatrix::identity(n, n));
    let x = (&x + x.transpose()) * 0.5;
    let (values, vectors) = sorted_symmetric_eigen(x);
    let u = vectors.columns(0, k).into_owned();
    (u, values[..k].to_vec(), values.get(k).copied(), 0)
}

/// Orthonormalizes the columns of `v` against the first `cols` columns of
/// `basis` and against each other (classical Gram–Schmidt, applied twice).
/// Columns that collapse are replaced by fresh random directions.
fn orthonormalize_against(basis: &DMatrix<f64>, cols: usize, v: &mut DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let n = v.nrows();
    for c in 0..v.ncols() {
        for attempt in 0..8 {
            let before = v.column(c).norm();
            for _ in 0..2 {
                if cols > 0 {
                    let q = basis.columns(0, cols);
                    let coeff = q.transpose() * v.column(c);
                    let proj = q * coeff;
                    let mut col = v.column_mut(c);
                    col -= proj;
                }
                for prev in 0..c {
                    let dot = v.column(prev).dot(&v.column(c));
                    let prev_col = v.column(prev).into_owned();
                    let mut col = v.column_mut(c);
                    col.axpy(-dot, &prev_col, 1.0);
                }
            }
            let after = v.column(c).norm();
            if after > 1e-10 * before.max(f64::MIN_POSITIVE) && after > 1e-300 {
                v.column_mut(c).scale_mut(1.0 / after);
                break;
            }
            assert!(attempt < 7, "could not extend a basis of {cols} vectors in dimension {n}");
            for r in 0..n {
                v[(r, c)] = rng.random::<f64>() - 0.5;
            }
        }
    }
}

fn block_lanczos<O: SymmetricOperator + ?Sized>(op: &O, k: usize, opts: &EigOptions) -> Result<Pairs> {
    let n = op.dim();
    let b = k;
    let max_iter = opts.max_iter.unwrap_or(50 * k);
    // basis cap; a restart keeps half of it
    let m_max = n.min((20 * b).max(60));
    let keep = (m_max / 2).max(k + 1).min(m_max - b.min(m_max - 1));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q = DMatrix::<f64>::zeros(n, m_max);
    let mut xq = DMatrix::<f64>::zeros(n, m_max);
    // projected operator Qᵀ X Q, grown one block at a time
    let mut t = DMatrix::<f64>::zeros(m_max, m_max);
    let mut cols = 0usize;

    let mut block = DMatrix::from_fn(n, b, |_, _| rng.random::<f64>() - 0.5);
    let mut iterations = 0usize;

    loop {
        // extend the basis by the (orthonormalized) pending block
        let width = block.ncols().min(m_max - cols).min(n - cols);
        let mut v = block.columns(0, width).into_owned();
        orthonormalize_against(&q, cols, &mut v, &mut rng);
        let xv = op.apply_block(&v);
        iterations += 1;
        q.columns_mut(cols, width).copy_from(&v);
        xq.columns_mut(cols, width).copy_from(&xv);
        let new_cols = q.columns(0, cols + width).transpose() * &xv;
        for r in 0..cols + width {
            for c in 0..width {
                let val = if r >= cols {
                    0.5 * (new_cols[(r, c)] + new_cols[(cols + c, r - cols)])
                } else {
                    new_cols[(r, c)]
                };
                t[(r, cols + c)] = val;
                t[(cols + c, r)] = val;
            }
        }
        cols += width;

        let full = cols + b > m_max;
        let check = iterations % RITZ_EVERY == 0 || full || cols == n || iterations >= max_iter;
        if !check {
            // plain block Krylov step
            block = xv;
            continue;
        }

        // Rayleigh–Ritz on the current basis
        let qb = q.columns(0, cols);
        let xqb = xq.columns(0, cols);
        let (theta, y) = sorted_symmetric_eigen(t.view((0, 0), (cols, cols)).into_owned());
        let norm_est = theta.iter().fold(1.0f64, |m, v| m.max(v.abs()));

        let want = k.min(cols);
        let yk = y.columns(0, want);
        let ritz = qb * yk;
        let mut resid = xqb * yk;
        for i in 0..want {
            let mut col = resid.column_mut(i);
            col.axpy(-theta[i], &ritz.column(i), 1.0);
        }
        let residuals: Vec<f64> = (0..want).map(|i| resid.column(i).norm()).collect();

        let converged = want == k && residuals.iter().all(|&r| r <= opts.tol * norm_est);
        if converged || cols == n {
            let next = theta.get(k).copied();
            return Ok((ritz, theta[..k].to_vec(), next, iterations));
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence { iterations, residuals });
        }

        if full {
            // thick restart on the leading Ritz vectors; the projection
            // becomes diagonal in that basis
            let r = keep.min(cols);
            let yr = y.columns(0, r);
            let new_q = qb * yr;
            let new_xq = xqb * yr;
            q.columns_mut(0, r).copy_from(&new_q);
            xq.columns_mut(0, r).copy_from(&new_xq);
            t.fill(0.0);
            for i in 0..r {
                t[(i, i)] = theta[i];
            }
            cols = r;
            // residuals of the wanted pairs extend the kept subspace
            block = resid;
        } else {
            block = xv;
        }
    }
}
