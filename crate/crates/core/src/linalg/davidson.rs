//! Block Davidson eigensolver for the lowest eigenpairs of a large real
//! symmetric operator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sparse::SymOperator;
use crate::error::{Error, Result};

/// Approximate inverse used to expand the search space.
pub trait Preconditioner: Sync {
    /// Overwrites `r` with an approximation of `(H - theta)^{-1} r`.
    fn apply(&self, theta: f64, r: &mut [f64]);
}

/// No preconditioning.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, _theta: f64, _r: &mut [f64]) {}
}

impl Preconditioner for super::dst::DirichletPreconditioner {
    fn apply(&self, _theta: f64, r: &mut [f64]) {
        super::dst::DirichletPreconditioner::apply(self, r);
    }
}

#[derive(Debug, Clone)]
pub struct DavidsonOptions {
    pub n_eig: usize,
    /// Absolute residual bound `||H x - theta x||` for unit `x`.
    pub tol: f64,
    pub max_iter: usize,
    /// Subspace size that triggers a thick restart.
    pub max_subspace: usize,
    pub seed: u64,
    /// Problems at or below this size are solved densely.
    pub dense_cutoff: usize,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self { n_eig: 1, tol: 1e-9, max_iter: 2000, max_subspace: 0, seed: 7, dense_cutoff: 600 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors (Euclidean norm), one per value.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= 1 << 15 {
        // fixed reduction order keeps results independent of the thread count
        let partial: Vec<f64> = a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
        partial.iter().sum()
    } else {
        a.iter().zip(b).map(|(p, q)| p * q).sum()
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if y.len() >= 1 << 15 {
        y.par_chunks_mut(4096).zip(x.par_chunks(4096)).for_each(|(yy, xx)| {
            yy.iter_mut().zip(xx).for_each(|(a, b)| *a += alpha * b);
        });
    } else {
        y.iter_mut().zip(x).for_each(|(a, b)| *a += alpha * b);
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Linear combinations `out_j = sum_i basis_i * coef[(i, j)]` for the first `k` columns.
fn combine(basis: &[Vec<f64>], coef: &DMatrix<f64>, k: usize) -> Vec<Vec<f64>> {
    let n = basis[0].len();
    (0..k)
        .into_par_iter()
        .map(|j| {
            let mut out = vec![0.0; n];
            for (i, b) in basis.iter().enumerate() {
                let c = coef[(i, j)];
                if c != 0.0 {
                    out.iter_mut().zip(b).for_each(|(o, v)| *o += c * v);
                }
            }
            out
        })
        .collect()
}

/// Dense fallback: materializes the operator column by column.
fn dense_solve<Op: SymOperator + ?Sized>(op: &Op, n_eig: usize) -> EigenPairs {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(n_eig);
    let mut vectors = Vec::with_capacity(n_eig);
    let mut residuals = Vec::with_capacity(n_eig);
    for &k in order.iter().take(n_eig) {
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lam = eig.eigenvalues[k];
        let mut hv = vec![0.0; n];
        op.apply(&v, &mut hv);
        axpy(-lam, &v, &mut hv);
        residuals.push(norm(&hv));
        values.push(lam);
        vectors.push(v);
    }
    EigenPairs { values, vectors, residuals, iterations: 1 }
}

/// Computes the `opts.n_eig` lowest eigenpairs. `guess` may supply starting
/// vectors (for example converged modes of a neighbouring problem).
pub fn lowest_eigenpairs<Op, P>(op: &Op, prec: &P, opts: &DavidsonOptions, guess: Option<&[Vec<f64>]>) -> Result<EigenPairs>
where
    Op: SymOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = op.dim();
    let nev = opts.n_eig;
    if nev == 0 || nev > n {
        return Err(Error::DimensionMismatch(format!("requested {nev} eigenpairs of a {n}-dimensional operator")));
    }
    if n <= opts.dense_cutoff {
        return Ok(dense_solve(op, nev));
    }
    let block = nev;
    let max_sub = if opts.max_subspace > 0 { opts.max_subspace } else { (4 * block).max(block + 12) };
    let max_sub = max_sub.min(n);
    let keep = (2 * block).max(block + 2).min(max_sub - block);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_sub + block);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_sub + block);

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if let Some(g) = guess {
        candidates.extend(g.iter().filter(|v| v.len() == n).cloned());
    }
    while candidates.len() < block {
        candidates.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
    }

    let mut iterations = 0;
    loop {
        // orthonormalize new directions against the basis and each other
        let before = basis.len();
        for mut c in candidates.drain(..) {
            let n0 = norm(&c);
            if n0 == 0.0 || !n0.is_finite() {
                continue;
            }
            c.iter_mut().for_each(|v| *v /= n0);
            for _pass in 0..2 {
                for b in &basis {
                    let p = dot(b, &c);
                    axpy(-p, b, &mut c);
                }
            }
            let nc = norm(&c);
            if nc < 1e-8 {
                continue;
            }
            c.iter_mut().for_each(|v| *v /= nc);
            let mut img = vec![0.0; n];
            op.apply(&c, &mut img);
            basis.push(c);
            images.push(img);
        }
        if basis.len() < block || (basis.len() == before && iterations > 0) {
            // expansion stagnated: refill with random directions
            candidates.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
            continue;
        }

        let m = basis.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut y = DMatrix::zeros(m, m);
        let mut theta = Vec::with_capacity(m);
        for (c, &k) in order.iter().enumerate() {
            y.set_column(c, &eig.eigenvectors.column(k));
            theta.push(eig.eigenvalues[k]);
        }

        let ritz = combine(&basis, &y, block);
        let ritz_img = combine(&images, &y, block);
        let mut residuals = Vec::with_capacity(block);
        let mut resid_vecs = Vec::with_capacity(block);
        for j in 0..block {
            let mut r = ritz_img[j].clone();
            axpy(-theta[j], &ritz[j], &mut r);
            residuals.push(norm(&r));
            resid_vecs.push(r);
        }
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        iterations += 1;
        if worst <= opts.tol {
            let mut vectors = ritz;
            for v in vectors.iter_mut() {
                let nv = norm(v);
                v.iter_mut().for_each(|x| *x /= nv);
            }
            return Ok(EigenPairs { values: theta[..block].to_vec(), vectors, residuals, iterations });
        }
        if iterations >= opts.max_iter {
            return Err(Error::ConvergenceFailure { iterations, residual: worst });
        }

        for (j, mut r) in resid_vecs.into_iter().enumerate() {
            if residuals[j] <= opts.tol {
                continue;
            }
            prec.apply(theta[j], &mut r);
            candidates.push(r);
        }

        if basis.len() + candidates.len() > max_sub {
            let k = keep.min(m);
            basis = combine(&basis, &y, k);
            images = combine(&images, &y, k);
        }
    }
}
