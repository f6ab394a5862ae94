//! Brute-force finite-difference solution of the full equation for the
//! rescaled wavefunction `chi` on a `(u1, u2, u3)` grid.
//!
//! The longitudinal kinetic term `D d1^2 + D' d1` is assembled in the
//! conservative form `d1 D d1`, which is the same continuum operator and
//! keeps the matrix symmetric at every resolution.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{slice_geometry, uniform_grid, CurveSpec, SliceGeometry};
use crate::linalg::{lowest_eigenpairs, CsrMatrix, DavidsonOptions, Preconditioner};
use crate::transverse::{build_transverse_hamiltonian, solve_transverse_modes, CrossSection, SolveOptions, TransverseGrid};

/// Upper bound on the number of grid points.
pub const POINT_CAP: usize = 2_000_000;

/// Tensor grid: `n1` interior points on `(u1_min, u1_max)` times a
/// transverse grid. All faces carry Dirichlet conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid3D {
    pub n1: usize,
    pub u1_min: f64,
    pub u1_max: f64,
    pub transverse: TransverseGrid,
}

impl Grid3D {
    pub fn new(n1: usize, u1_min: f64, u1_max: f64, transverse: TransverseGrid) -> Result<Self> {
        if n1 < 3 {
            return Err(Error::config("solver.reference_points", "need at least 3 longitudinal points"));
        }
        if !(u1_max > u1_min) {
            return Err(Error::InvalidGrid(format!("empty interval [{u1_min}, {u1_max}]")));
        }
        let points = n1 * transverse.len();
        if points > POINT_CAP {
            return Err(Error::MemoryCap { points, cap: POINT_CAP });
        }
        Ok(Self { n1, u1_min, u1_max, transverse })
    }

    pub fn h1(&self) -> f64 {
        (self.u1_max - self.u1_min) / (self.n1 + 1) as f64
    }

    /// Interior longitudinal node `i`.
    pub fn u1(&self, i: usize) -> f64 {
        self.u1_min + (i + 1) as f64 * self.h1()
    }

    pub fn len(&self) -> usize {
        self.n1 * self.transverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceOptions {
    pub n_states: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Transverse modes of the central slice used by the preconditioner.
    pub precondition_modes: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { n_states: 1, tol: 1e-8, max_iter: 500, seed: 5, precondition_modes: 12 }
    }
}

/// The assembled operator over the points inside the walls.
#[derive(Debug, Clone)]
pub struct ReferenceOperator {
    pub grid: Grid3D,
    pub matrix: CsrMatrix,
    /// Flat `(i1, p)` index of every unknown, `p` fastest.
    pub active: Vec<usize>,
    /// Metric weight at the longitudinal midpoints, `n1 + 1` rows.
    mid_d: Vec<Vec<f64>>,
    /// `V1 - C/2` at the interior nodes.
    node_scalar: Vec<Vec<f64>>,
}

impl ReferenceOperator {
    pub fn embed(&self, v: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        for (a, &k) in self.active.iter().enumerate() {
            full[k] = v[a];
        }
        full
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceResult {
    pub eigenvalues: Vec<f64>,
    /// `chi` on the full grid, normalized so that `sum |chi|^2 h1 hx hy = 1`.
    #[serde(skip)]
    pub fields: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub hermiticity_defect: f64,
    pub iterations: usize,
}

/// Geometry at every node (even entries) and midpoint (odd entries),
/// including both boundary nodes.
fn half_step_geometry(curve: &CurveSpec, grid: &Grid3D, theta0: f64) -> Result<Vec<SliceGeometry>> {
    slice_geometry(curve, &uniform_grid(grid.u1_min, grid.u1_max, 2 * (grid.n1 + 1) + 1), theta0)
}

/// Assembles `-1/2 d1 D d1 - 1/2 (d2^2 + d3^2) - C/2 + V` with the scalar
/// curvature field `C` evaluated pointwise.
pub fn assemble_reference(curve: &CurveSpec, theta0: f64, cs: &CrossSection, grid: &Grid3D) -> Result<ReferenceOperator> {
    let tg = grid.transverse;
    let np = tg.len();
    let geo = half_step_geometry(curve, grid, theta0)?;
    let h1 = grid.h1();
    let (c1, cx, cy) = (0.5 / (h1 * h1), 0.5 / (tg.hx() * tg.hx()), 0.5 / (tg.hy() * tg.hy()));

    // midpoint metric weights, index j between full nodes j and j + 1
    let mids: Vec<Vec<f64>> = (0..=grid.n1)
        .into_par_iter()
        .map(|j| {
            let g = &geo[2 * j + 1];
            (0..np)
                .map(|p| {
                    let (x, y) = tg.point(p);
                    g.weights(x, y).map(|w| w.d).ok_or_else(|| tube_error(g, x, y))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    // diagonal potential part and activity per node
    let nodes: Vec<Vec<Option<(f64, f64)>>> = (0..grid.n1)
        .into_par_iter()
        .map(|i| {
            let g = &geo[2 * (i + 1)];
            let v1 = cs.v1.value(g.u1);
            (0..np)
                .map(|p| {
                    let (x, y) = tg.point(p);
                    let v = cs.potential(x, y, g.u1);
                    if v.is_infinite() {
                        return Ok(None);
                    }
                    if !v.is_finite() {
                        return Err(Error::config("cross_section", format!("potential is not finite at u1 = {}, u2 = {x}, u3 = {y}", g.u1)));
                    }
                    let w = g.weights(x, y).ok_or_else(|| tube_error(g, x, y))?;
                    Ok(Some((v, v1 - 0.5 * w.c)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut slot = vec![usize::MAX; grid.len()];
    let mut active = Vec::new();
    for (i, row) in nodes.iter().enumerate() {
        for (p, v) in row.iter().enumerate() {
            if v.is_some() {
                slot[i * np + p] = active.len();
                active.push(i * np + p);
            }
        }
    }
    if active.is_empty() {
        return Err(Error::config("cross_section", "no grid point lies inside the walls"));
    }

    let blocks: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)> = (0..grid.n1)
        .into_par_iter()
        .map(|i| {
            let mut counts = Vec::new();
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for p in 0..np {
                let Some((v, scalar)) = nodes[i][p] else { continue };
                let vdiag = v + scalar;
                let (ix, iy) = (p / tg.ny, p % tg.ny);
                let (dm, dp) = (mids[i][p], mids[i + 1][p]);
                let start = cols.len();
                let mut push = |k: usize, v: f64| {
                    if slot[k] != usize::MAX {
                        cols.push(slot[k]);
                        vals.push(v);
                    }
                };
                if i > 0 {
                    push((i - 1) * np + p, -c1 * dm);
                }
                if ix > 0 {
                    push(i * np + p - tg.ny, -cx);
                }
                if iy > 0 {
                    push(i * np + p - 1, -cy);
                }
                push(i * np + p, c1 * (dm + dp) + 2.0 * (cx + cy) + vdiag);
                if iy + 1 < tg.ny {
                    push(i * np + p + 1, -cy);
                }
                if ix + 1 < tg.nx {
                    push(i * np + p + tg.ny, -cx);
                }
                if i + 1 < grid.n1 {
                    push((i + 1) * np + p, -c1 * dp);
                }
                counts.push(cols.len() - start);
            }
            (counts, cols, vals)
        })
        .collect();
    let node_scalar = nodes.iter().map(|row| row.iter().map(|v| v.map_or(0.0, |x| x.1)).collect()).collect();
    Ok(ReferenceOperator { grid: *grid, matrix: CsrMatrix::from_row_blocks(active.len(), blocks), active, mid_d: mids, node_scalar })
}

fn tube_error(g: &SliceGeometry, u2: f64, u3: f64) -> Error {
    let (nhat, _) = crate::geometry::projections(g.theta, u2, u3);
    Error::InvalidTube { u1: g.u1, u2, u3, margin: 1.0 - g.curve.kappa * nhat }
}

/// Approximate inverse built from the central-slice transverse modes: on
/// each mode the diagonal longitudinal operator `-1/2 d1 D_kk d1 + E_k +
/// <V1 - C/2>_kk - sigma` is solved exactly, the complement is scaled.
struct ModePreconditioner<'a> {
    op: &'a ReferenceOperator,
    /// Euclidean-normalized full-grid transverse modes.
    modes: Vec<Vec<f64>>,
    /// Tridiagonal (diagonal, lower off-diagonal) per mode.
    tri: Vec<(Vec<f64>, Vec<f64>)>,
    /// Inverse of `max(H_ii, E_top) - sigma` on the full grid.
    complement: Vec<f64>,
}

impl<'a> ModePreconditioner<'a> {
    fn new(op: &'a ReferenceOperator, modes: Vec<Vec<f64>>, energies: &[f64]) -> Self {
        let grid = &op.grid;
        let n1 = grid.n1;
        let c1 = 0.5 / (grid.h1() * grid.h1());
        let avg = |f: &[f64], phi: &[f64]| f.iter().zip(phi).map(|(a, p)| a * p * p).sum::<f64>();
        let blocks: Vec<(Vec<f64>, Vec<f64>, f64)> = modes
            .par_iter()
            .zip(energies)
            .map(|(phi, e)| {
                let dm: Vec<f64> = op.mid_d.iter().map(|d| avg(d, phi)).collect();
                let diag: Vec<f64> = (0..n1).map(|i| c1 * (dm[i] + dm[i + 1]) + e + avg(&op.node_scalar[i], phi)).collect();
                let off: Vec<f64> = (1..n1).map(|i| -c1 * dm[i]).collect();
                let low = gershgorin_tridiagonal(&diag, &off);
                (diag, off, low)
            })
            .collect();
        // stay below every block's spectrum so each solve is positive definite
        let floor = blocks.iter().map(|b| b.2).fold(f64::INFINITY, f64::min);
        let exact0 = lowest_tridiagonal(&blocks[0].0, &blocks[0].1, floor);
        let gap = energies.windows(2).map(|w| w[1] - w[0]).find(|g| *g > 1e-8).unwrap_or(1.0).min(4.0 * c1);
        let sigma = floor.max(exact0 - 0.5 * gap).min(exact0 - 1e-3 * gap);
        let top = energies[energies.len() - 1];
        let tri = blocks.into_iter().map(|(d, o, _)| (d.into_iter().map(|x| x - sigma).collect(), o)).collect();
        let diag = op.embed(&op.matrix.diagonal());
        let complement = diag.iter().map(|h| 1.0 / (h.max(top) - sigma).max(1e-12)).collect();
        Self { op, modes, tri, complement }
    }
}

fn gershgorin_tridiagonal(diag: &[f64], off: &[f64]) -> f64 {
    (0..diag.len())
        .map(|i| {
            let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let r = if i < off.len() { off[i].abs() } else { 0.0 };
            diag[i] - l - r
        })
        .fold(f64::INFINITY, f64::min)
}

/// Lowest eigenvalue of a symmetric tridiagonal matrix by bisection on the
/// Sturm count, starting from a known lower bound.
fn lowest_tridiagonal(diag: &[f64], off: &[f64], lower: f64) -> f64 {
    let count_below = |x: f64| {
        let mut q = diag[0] - x;
        let mut c = usize::from(q < 0.0);
        for i in 1..diag.len() {
            let denom = if q == 0.0 { 1e-300 } else { q };
            q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
            c += usize::from(q < 0.0);
        }
        c
    };
    let (mut a, mut b) = (lower, diag.iter().copied().fold(f64::INFINITY, f64::min));
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if count_below(m) >= 1 {
            b = m;
        } else {
            a = m;
        }
        if b - a <= 1e-13 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

fn tridiagonal_solve(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = off[i - 1] / beta;
        beta = diag[i] - off[i - 1] * c[i];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}

impl Preconditioner for ModePreconditioner<'_> {
    fn apply(&self, _theta: f64, r: &mut [f64]) {
        let np = self.op.grid.transverse.len();
        let mut full = self.op.embed(r);
        let k = self.modes.len();
        let coef: Vec<Vec<f64>> = self
            .modes
            .par_iter()
            .map(|phi| full.chunks(np).map(|row| row.iter().zip(phi).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let solved: Vec<Vec<f64>> = coef
            .par_iter()
            .zip(&self.tri)
            .map(|(c, (d, o))| {
                let mut y = c.clone();
                tridiagonal_solve(d, o, &mut y);
                y
            })
            .collect();
        full.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
            for m in 0..k {
                let c = coef[m][i];
                row.iter_mut().zip(&self.modes[m]).for_each(|(v, p)| *v -= c * p);
            }
            row.iter_mut().zip(&self.complement[i * np..(i + 1) * np]).for_each(|(v, c)| *v *= c);
            for m in 0..k {
                let y = solved[m][i];
                row.iter_mut().zip(&self.modes[m]).for_each(|(v, p)| *v += y * p);
            }
        });
        for (a, &idx) in self.op.active.iter().enumerate() {
            r[a] = full[idx];
        }
    }
}

/// Lowest eigenpairs of the full 3D operator.
pub fn solve_reference(curve: &CurveSpec, theta0: f64, cs: &CrossSection, grid: &Grid3D, opts: &ReferenceOptions) -> Result<ReferenceResult> {
    let op = assemble_reference(curve, theta0, cs, grid)?;
    let tg = grid.transverse;
    let mid = grid.u1(grid.n1 / 2);
    let top = build_transverse_hamiltonian(&tg, cs, mid, None)?;
    let kmodes = opts.precondition_modes.max(opts.n_states + 2).min(top.active.len());
    let tm = solve_transverse_modes(&top, kmodes, &SolveOptions { tol: 1e-8, seed: opts.seed, max_iter: 3000 }, None)?;
    let sw = tg.weight().sqrt();
    let modes: Vec<Vec<f64>> = tm.modes.iter().map(|m| m.iter().map(|v| v * sw).collect()).collect();
    let h1 = grid.h1();
    let lam = |k: usize| (1.0 - (std::f64::consts::PI * k as f64 / (grid.n1 + 1) as f64).cos()) / (h1 * h1);
    let prec = ModePreconditioner::new(&op, modes.clone(), &tm.energies);

    // guesses: products of transverse and longitudinal sine modes, lowest first
    let mut pairs: Vec<(f64, usize, usize)> = (0..kmodes).flat_map(|m| (1..=opts.n_states).map(move |j| (m, j))).map(|(m, j)| (tm.energies[m] + lam(j), m, j)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let np = tg.len();
    let guess: Vec<Vec<f64>> = pairs
        .iter()
        .take(opts.n_states)
        .map(|&(_, m, j)| {
            op.active
                .iter()
                .map(|&idx| {
                    let (i, p) = (idx / np, idx % np);
                    let s = (std::f64::consts::PI * j as f64 * (i + 1) as f64 / (grid.n1 + 1) as f64).sin();
                    s * modes[m][p]
                })
                .collect()
        })
        .collect();
    let dav = DavidsonOptions { n_eig: opts.n_states, tol: opts.tol, max_iter: opts.max_iter, seed: opts.seed, dense_cutoff: 400, ..Default::default() };
    let res = lowest_eigenpairs(&op.matrix, &prec, &dav, Some(&guess))?;
    let scale = (h1 * tg.weight()).sqrt();
    let fields = res.vectors.iter().map(|v| op.embed(v).into_iter().map(|x| x / scale).collect()).collect();
    Ok(ReferenceResult {
        eigenvalues: res.values,
        fields,
        residuals: res.residuals,
        hermiticity_defect: op.matrix.symmetry_defect(),
        iterations: res.iterations,
    })
}
