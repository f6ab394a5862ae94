//! Transverse (normal-plane) eigenproblems along the guide, mode tracking
//! and numerical arc-length derivatives of the modes.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::projections;
use crate::linalg::{self, Axis, BandCholesky, CsrMatrix, DavidsonOptions, DirichletPreconditioner, Preconditioner, TripletBuilder};
use crate::profile::{CubicSpline, Profile};

/// Hard cap on the number of retained modes.
pub const MODE_CAP: usize = 16;
/// Energy gap below which neighbouring modes are treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
/// Slices solved in sequence, each seeded by the previous one.
const CONTINUATION_CHUNK: usize = 16;
/// Largest `n * bandwidth^2` for which a band Cholesky preconditioner is used.
const BAND_FACTOR_BUDGET: f64 = 1e9;

/// Rectangular normal-plane grid of interior points with Dirichlet walls at
/// `u2 = +-lx` and `u3 = +-ly`. Points are stored with `u3` fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl TransverseGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::config("solver.transverse_points", "need at least 3 points per axis"));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::config("solver.transverse_extent", "half-widths must be positive"));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.lx / (self.nx + 1) as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * self.ly / (self.ny + 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.lx + (i + 1) as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        -self.ly + (j + 1) as f64 * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Coordinates of flat index `k`.
    pub fn point(&self, k: usize) -> (f64, f64) {
        (self.x(k / self.ny), self.y(k % self.ny))
    }

    /// Quadrature weight of one grid point.
    pub fn weight(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn axes(&self) -> Vec<Axis> {
        vec![Axis { n: self.nx, h: self.hx() }, Axis { n: self.ny, h: self.hy() }]
    }

    /// Weighted inner product `sum a b hx hy`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() * self.weight()
    }

    /// Centered first differences with zero Dirichlet neighbours.
    pub fn gradient(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (hx, hy) = (self.hx(), self.hy());
        let mut gx = vec![0.0; f.len()];
        let mut gy = vec![0.0; f.len()];
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                0.0
            } else {
                f[self.index(i as usize, j as usize)]
            }
        };
        for i in 0..self.nx {
            for j in 0..self.ny {
                let (ii, jj) = (i as isize, j as isize);
                let k = self.index(i, j);
                gx[k] = (at(ii + 1, jj) - at(ii - 1, jj)) / (2.0 * hx);
                gy[k] = (at(ii, jj + 1) - at(ii, jj - 1)) / (2.0 * hy);
            }
        }
        (gx, gy)
    }

    /// Five-point Laplacian with zero Dirichlet neighbours.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let (cx, cy) = (1.0 / (self.hx() * self.hx()), 1.0 / (self.hy() * self.hy()));
        let mut out = vec![0.0; f.len()];
        for i in 0..self.nx {
            for j in 0..self.ny {
                let k = self.index(i, j);
                let mut acc = -2.0 * (cx + cy) * f[k];
                if i > 0 {
                    acc += cx * f[k - self.ny];
                }
                if i + 1 < self.nx {
                    acc += cx * f[k + self.ny];
                }
                if j > 0 {
                    acc += cy * f[k - 1];
                }
                if j + 1 < self.ny {
                    acc += cy * f[k + 1];
                }
                out[k] = acc;
            }
        }
        out
    }

    /// Quadratic form `<f| -(e.grad)^2 |f>` using 3-point second differences
    /// along the axes and a centered mixed difference.
    pub fn directional_kinetic(&self, f: &[f64], e: [f64; 2]) -> f64 {
        let (hx, hy) = (self.hx(), self.hy());
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                0.0
            } else {
                f[self.index(i as usize, j as usize)]
            }
        };
        let mut acc = 0.0;
        for i in 0..self.nx as isize {
            for j in 0..self.ny as isize {
                let c = at(i, j);
                let dxx = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (hx * hx);
                let dyy = (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (hy * hy);
                let dxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * hx * hy);
                acc -= c * (e[0] * e[0] * dxx + 2.0 * e[0] * e[1] * dxy + e[1] * e[1] * dyy);
            }
        }
        acc * self.weight()
    }
}

/// Base transverse profile before rotation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `omega^2 (u2^2 + u3^2) / 2`.
    HarmonicIsotropic { omega: Profile },
    /// `(omega2^2 u2^2 + omega3^2 u3^2) / 2`.
    HarmonicAnisotropic { omega2: Profile, omega3: Profile },
    /// Hard walls at `|u2| = half_width2`, `|u3| = half_width3`.
    DirichletBox { half_width2: Profile, half_width3: Profile },
    /// `barrier ((u2/separation)^2 - 1)^2 + tilt u2 + omega3^2 u3^2 / 2`.
    DoubleWell {
        barrier: Profile,
        separation: Profile,
        omega3: Profile,
        #[serde(default)]
        tilt: Profile,
    },
    /// Values on a rectangular table, bicubic spline interpolated.
    Tabulated { u2: Vec<f64>, u3: Vec<f64>, values: Vec<Vec<f64>> },
}

/// Cross-section potential `V1(u1) + Vperp(u2, u3; u1)`, where the base profile
/// is rotated by `twist(u1)` and then translated by `shift(u1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub twist: Profile,
    #[serde(default)]
    pub shift: [Profile; 2],
    #[serde(default)]
    pub v1: Profile,
}

impl CrossSection {
    pub fn new(family: Family) -> Self {
        Self { family, twist: Profile::default(), shift: Default::default(), v1: Profile::default() }
    }

    pub fn harmonic(omega: f64) -> Self {
        Self::new(Family::HarmonicIsotropic { omega: Profile::Constant(omega) })
    }

    pub fn with_twist(mut self, twist: Profile) -> Self {
        self.twist = twist;
        self
    }

    pub fn with_shift(mut self, d2: Profile, d3: Profile) -> Self {
        self.shift = [d2, d3];
        self
    }

    /// Checks parameter signs on `[u1_min, u1_max]` and the table shape.
    pub fn validate(&self, u1_min: f64, u1_max: f64) -> Result<()> {
        let positive = |p: &Profile, key: &str| -> Result<()> {
            for k in 0..=64 {
                let u = u1_min + (u1_max - u1_min) * k as f64 / 64.0;
                let v = p.value(u);
                if !(v > 0.0) {
                    return Err(Error::config(format!("cross_section.{key}"), format!("must be positive, got {v} at u1 = {u}")));
                }
            }
            Ok(())
        };
        match &self.family {
            Family::HarmonicIsotropic { omega } => positive(omega, "omega"),
            Family::HarmonicAnisotropic { omega2, omega3 } => {
                positive(omega2, "omega2")?;
                positive(omega3, "omega3")
            }
            Family::DirichletBox { half_width2, half_width3 } => {
                positive(half_width2, "half_width2")?;
                positive(half_width3, "half_width3")
            }
            Family::DoubleWell { barrier, separation, omega3, .. } => {
                positive(barrier, "barrier")?;
                positive(separation, "separation")?;
                positive(omega3, "omega3")
            }
            Family::Tabulated { u2, u3, values } => {
                if values.len() != u2.len() || values.iter().any(|r| r.len() != u3.len()) {
                    return Err(Error::config("cross_section.values", "table shape must be len(u2) rows of len(u3)"));
                }
                CubicSpline::new(u2.clone(), vec![0.0; u2.len()])?;
                CubicSpline::new(u3.clone(), vec![0.0; u3.len()])?;
                Ok(())
            }
        }
    }

    pub fn family_tag(&self) -> &'static str {
        match self.family {
            Family::HarmonicIsotropic { .. } => "harmonic_isotropic",
            Family::HarmonicAnisotropic { .. } => "harmonic_anisotropic",
            Family::DirichletBox { .. } => "dirichlet_box",
            Family::DoubleWell { .. } => "double_well",
            Family::Tabulated { .. } => "tabulated",
        }
    }

    pub fn is_hard_wall(&self) -> bool {
        matches!(self.family, Family::DirichletBox { .. })
    }

    pub fn has_twist(&self) -> bool {
        !self.twist.is_constant()
    }

    pub fn has_shift(&self) -> bool {
        !(self.shift[0].is_constant() && self.shift[1].is_constant())
    }

    /// True when the transverse Hamiltonian does not change along the guide.
    pub fn is_u1_independent(&self) -> bool {
        let params: Vec<&Profile> = match &self.family {
            Family::HarmonicIsotropic { omega } => vec![omega],
            Family::HarmonicAnisotropic { omega2, omega3 } => vec![omega2, omega3],
            Family::DirichletBox { half_width2, half_width3 } => vec![half_width2, half_width3],
            Family::DoubleWell { barrier, separation, omega3, tilt } => vec![barrier, separation, omega3, tilt],
            Family::Tabulated { .. } => vec![],
        };
        params.iter().all(|p| p.is_constant()) && !self.has_twist() && !self.has_shift()
    }

    /// Maps a Tang-frame point into the base-profile frame.
    fn to_base(&self, u2: f64, u3: f64, u1: f64) -> (f64, f64) {
        let qx = u2 - self.shift[0].value(u1);
        let qy = u3 - self.shift[1].value(u1);
        let (s, c) = self.twist.value(u1).sin_cos();
        (c * qx + s * qy, -s * qx + c * qy)
    }

    fn base(&self, x: f64, y: f64, u1: f64) -> f64 {
        match &self.family {
            Family::HarmonicIsotropic { omega } => {
                let w = omega.value(u1);
                0.5 * w * w * (x * x + y * y)
            }
            Family::HarmonicAnisotropic { omega2, omega3 } => {
                let (w2, w3) = (omega2.value(u1), omega3.value(u1));
                0.5 * (w2 * w2 * x * x + w3 * w3 * y * y)
            }
            Family::DirichletBox { half_width2, half_width3 } => {
                if x.abs() < half_width2.value(u1) && y.abs() < half_width3.value(u1) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Family::DoubleWell { barrier, separation, omega3, tilt } => {
                let r = x / separation.value(u1);
                let q = r * r - 1.0;
                let w3 = omega3.value(u1);
                barrier.value(u1) * q * q + tilt.value(u1) * x + 0.5 * w3 * w3 * y * y
            }
            Family::Tabulated { u2, u3, values } => {
                // splines along u3 for every u2 row, then one spline across u2
                let col: Vec<f64> = values
                    .iter()
                    .map(|row| CubicSpline::new(u3.clone(), row.clone()).map(|s| s.jet(y).v).unwrap_or(f64::NAN))
                    .collect();
                CubicSpline::new(u2.clone(), col).map(|s| s.jet(x).v).unwrap_or(f64::NAN)
            }
        }
    }

    /// Transverse potential `Vperp(u2, u3; u1)` (infinite outside hard walls).
    pub fn potential(&self, u2: f64, u3: f64, u1: f64) -> f64 {
        let (x, y) = self.to_base(u2, u3, u1);
        self.base(x, y, u1)
    }

    /// `dVperp/du1` by a fourth-order central difference.
    pub fn potential_u1_derivative(&self, u2: f64, u3: f64, u1: f64) -> Result<f64> {
        if self.is_hard_wall() {
            return Err(Error::NoPotentialDerivative("hard-wall cross-sections have no potential derivative"));
        }
        let h = 1e-3;
        let f = |d: f64| self.potential(u2, u3, u1 + d);
        Ok((-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h))
    }

    /// Values of `dVperp/du1` on every grid point.
    pub fn potential_u1_derivative_on(&self, grid: &TransverseGrid, u1: f64) -> Result<Vec<f64>> {
        (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                self.potential_u1_derivative(x, y, u1)
            })
            .collect()
    }
}

/// Curvature data used to check tube injectivity on a slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeCheck {
    pub u1: f64,
    pub kappa: f64,
    pub theta: f64,
}

/// Sparse transverse Hamiltonian restricted to the points inside the walls.
#[derive(Debug, Clone)]
pub struct TransverseOperator {
    pub grid: TransverseGrid,
    pub matrix: CsrMatrix,
    /// Full-grid index of every unknown.
    pub active: Vec<usize>,
    pub potential: Vec<f64>,
}

impl TransverseOperator {
    pub fn embed(&self, v: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        for (a, &k) in self.active.iter().enumerate() {
            full[k] = v[a];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&k| full[k]).collect()
    }
}

/// Five-point finite-difference `-1/2 Laplacian + Vperp` with Dirichlet
/// rows eliminated (including points behind hard walls).
pub fn build_transverse_hamiltonian(grid: &TransverseGrid, cs: &CrossSection, u1: f64, tube: Option<TubeCheck>) -> Result<TransverseOperator> {
    let n = grid.len();
    let pot: Vec<f64> = (0..n)
        .map(|k| {
            let (x, y) = grid.point(k);
            cs.potential(x, y, u1)
        })
        .collect();
    let mut slot = vec![usize::MAX; n];
    let mut active = Vec::with_capacity(n);
    for k in 0..n {
        if pot[k].is_finite() {
            slot[k] = active.len();
            active.push(k);
        } else if !pot[k].is_infinite() {
            let (x, y) = grid.point(k);
            return Err(Error::config("cross_section", format!("potential is not finite at u1 = {u1}, u2 = {x}, u3 = {y}")));
        }
    }
    if active.is_empty() {
        return Err(Error::config("cross_section", format!("no grid point lies inside the walls at u1 = {u1}")));
    }
    if let Some(t) = tube {
        for &k in &active {
            let (x, y) = grid.point(k);
            let (nhat, _) = projections(t.theta, x, y);
            let margin = 1.0 - t.kappa * nhat;
            if margin <= 0.0 {
                return Err(Error::InvalidTube { u1: t.u1, u2: x, u3: y, margin });
            }
        }
    }
    let (cx, cy) = (0.5 / (grid.hx() * grid.hx()), 0.5 / (grid.hy() * grid.hy()));
    let mut b = TripletBuilder::new(active.len());
    for (a, &k) in active.iter().enumerate() {
        let (i, j) = (k / grid.ny, k % grid.ny);
        b.add(a, a, 2.0 * cx + 2.0 * cy + pot[k]);
        let mut link = |ii: usize, jj: usize, c: f64| {
            let s = slot[grid.index(ii, jj)];
            if s != usize::MAX {
                b.add(a, s, -c);
            }
        };
        if i > 0 {
            link(i - 1, j, cx);
        }
        if i + 1 < grid.nx {
            link(i + 1, j, cx);
        }
        if j > 0 {
            link(i, j - 1, cy);
        }
        if j + 1 < grid.ny {
            link(i, j + 1, cy);
        }
    }
    Ok(TransverseOperator { grid: *grid, matrix: b.build(), active, potential: pot })
}

/// Fast Dirichlet preconditioner acting on the active subset of the grid.
struct MaskedPreconditioner<'a> {
    inner: DirichletPreconditioner,
    op: &'a TransverseOperator,
}

impl Preconditioner for MaskedPreconditioner<'_> {
    fn apply(&self, _theta: f64, r: &mut [f64]) {
        if self.op.active.len() == self.op.grid.len() {
            self.inner.apply(r);
        } else {
            let mut full = self.op.embed(r);
            self.inner.apply(&mut full);
            r.copy_from_slice(&self.op.restrict(&full));
        }
    }
}

#[derive(Debug, Clone)]
pub struct SliceModes {
    pub energies: Vec<f64>,
    /// Full-grid vectors normalized with the `hx hy` weight.
    pub modes: Vec<Vec<f64>>,
    /// Relative residuals `||H phi - E phi|| / ||phi||`.
    pub residuals: Vec<f64>,
    /// Indices `m` with `|E_m - E_{m+1}| < DEGENERACY_THRESHOLD`.
    pub degenerate_pairs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, seed: 11, max_iter: 3000 }
    }
}

/// Lowest `m` eigenpairs of a transverse operator.
pub fn solve_transverse_modes(op: &TransverseOperator, m: usize, opts: &SolveOptions, guess: Option<&[Vec<f64>]>) -> Result<SliceModes> {
    if m == 0 {
        return Err(Error::config("modes.total", "at least one mode is required"));
    }
    let grid = &op.grid;
    let dav = DavidsonOptions { n_eig: m, tol: opts.tol, max_iter: opts.max_iter, seed: opts.seed, dense_cutoff: 150, ..Default::default() };
    let restricted_guess: Option<Vec<Vec<f64>>> = guess.map(|g| g.iter().map(|v| op.restrict(v)).collect());
    let band = op.matrix.bandwidth();
    let res = if (op.active.len() as f64) * (band * band) as f64 <= BAND_FACTOR_BUDGET {
        // exact shift-invert below the Gershgorin bound
        let scale = op.matrix.diagonal().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let prec = BandCholesky::factor(&op.matrix, op.matrix.gershgorin_lower() - 1e-3 * scale)?;
        linalg::lowest_eigenpairs(&op.matrix, &prec, &dav, restricted_guess.as_deref())?
    } else {
        let vmin = op.active.iter().map(|&k| op.potential[k]).fold(f64::INFINITY, f64::min);
        let shift = 1.0 + (-vmin).max(0.0);
        let prec = MaskedPreconditioner { inner: DirichletPreconditioner::new(grid.axes(), 1, shift), op };
        linalg::lowest_eigenpairs(&op.matrix, &prec, &dav, restricted_guess.as_deref())?
    };
    let scale = grid.weight().sqrt();
    let modes: Vec<Vec<f64>> = res.vectors.iter().map(|v| op.embed(v).into_iter().map(|x| x / scale).collect()).collect();
    let degenerate_pairs = res.values.windows(2).enumerate().filter(|(_, w)| (w[1] - w[0]).abs() < DEGENERACY_THRESHOLD).map(|(i, _)| i).collect();
    Ok(SliceModes { energies: res.values, modes, residuals: res.residuals, degenerate_pairs })
}

/// Transverse modes on every slice, gauge-aligned, with arc-length derivatives.
#[derive(Debug, Clone)]
pub struct ModeBundle {
    pub grid: TransverseGrid,
    pub slices: Vec<f64>,
    /// `energies[i][m]`.
    pub energies: Vec<Vec<f64>>,
    /// `modes[i][m]`, full-grid vectors.
    pub modes: Vec<Vec<Vec<f64>>>,
    pub dmodes: Vec<Vec<Vec<f64>>>,
    pub d2modes: Vec<Vec<Vec<f64>>>,
    /// Overlaps `<phi_m(u_i)|phi_n(u_{i+1})>` after alignment.
    pub overlap_log: Vec<DMatrix<f64>>,
    /// Slices where degenerate pairs were found, with the lower mode index.
    pub degeneracies: Vec<(usize, usize)>,
}

impl ModeBundle {
    pub fn n_modes(&self) -> usize {
        self.energies.first().map_or(0, |e| e.len())
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn spacing(&self) -> f64 {
        (self.slices.last().unwrap() - self.slices[0]) / (self.slices.len() - 1) as f64
    }

    /// Largest deviation from orthonormality over all slices.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for modes in &self.modes {
            for (a, pa) in modes.iter().enumerate() {
                for (b, pb) in modes.iter().enumerate() {
                    let target = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((self.grid.inner(pa, pb) - target).abs());
                }
            }
        }
        worst
    }

    /// Overlap matrix `<phi_m|d1 phi_n>` at slice `i`.
    pub fn derivative_overlap(&self, i: usize) -> DMatrix<f64> {
        let m = self.n_modes();
        DMatrix::from_fn(m, m, |a, b| self.grid.inner(&self.modes[i][a], &self.dmodes[i][b]))
    }
}

/// Inputs describing how to build a [`ModeBundle`].
#[derive(Debug, Clone)]
pub struct BundleRequest<'a> {
    pub grid: TransverseGrid,
    pub cross_section: &'a CrossSection,
    pub slices: &'a [f64],
    /// Modes to keep; extended upward so no degenerate shell is split.
    pub modes: usize,
    /// Curvature and Tang angle per slice for the injectivity check.
    pub tube: Option<Vec<TubeCheck>>,
    pub solve: SolveOptions,
}

/// Solves every slice (in parallel), then aligns and differentiates.
pub fn compute_mode_bundle(req: &BundleRequest<'_>) -> Result<ModeBundle> {
    let ns = req.slices.len();
    if ns < 4 {
        return Err(Error::InvalidGrid("at least four slices are needed for mode derivatives".into()));
    }
    let h = (req.slices[ns - 1] - req.slices[0]) / (ns - 1) as f64;
    if req.slices.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(Error::InvalidGrid("slices must be uniformly spaced".into()));
    }
    let tube = |i: usize| req.tube.as_ref().map(|t| t[i]);
    let cs = req.cross_section;

    // decide the kept count on the first slice so no degenerate shell is cut
    let op0 = build_transverse_hamiltonian(&req.grid, cs, req.slices[0], tube(0))?;
    let probe_count = (req.modes + 6).min(op0.active.len());
    let probe = solve_transverse_modes(&op0, probe_count, &req.solve, None)?;
    let mut keep = req.modes.min(probe_count);
    while keep < probe_count && (probe.energies[keep] - probe.energies[keep - 1]).abs() < DEGENERACY_THRESHOLD {
        keep += 1;
    }
    if keep > MODE_CAP {
        return Err(Error::config("modes.total", format!("{keep} modes needed to close the degenerate shell, above the cap of {MODE_CAP}")));
    }
    let mut solve_count = (keep + 2).min(probe_count);
    while solve_count < probe_count && (probe.energies[solve_count] - probe.energies[solve_count - 1]).abs() < DEGENERACY_THRESHOLD {
        solve_count += 1;
    }

    let mut per_slice: Vec<SliceModes> = if cs.is_u1_independent() {
        // one solve serves every slice; derivatives vanish identically
        for i in 0..ns {
            if let Some(t) = tube(i) {
                build_transverse_hamiltonian(&req.grid, cs, req.slices[i], Some(t))?;
            }
        }
        let mut s = probe.clone();
        s.energies.truncate(solve_count);
        s.modes.truncate(solve_count);
        s.residuals.truncate(solve_count);
        vec![s; ns]
    } else {
        // fixed-size chunks in parallel; inside a chunk each slice starts from
        // its neighbour's modes
        let chunks: Vec<Vec<SliceModes>> = (0..ns)
            .collect::<Vec<_>>()
            .par_chunks(CONTINUATION_CHUNK)
            .map(|idx| {
                let mut out: Vec<SliceModes> = Vec::with_capacity(idx.len());
                for &i in idx {
                    let op = build_transverse_hamiltonian(&req.grid, cs, req.slices[i], tube(i))?;
                    let opts = SolveOptions { seed: req.solve.seed.wrapping_add(i as u64), ..req.solve.clone() };
                    let guess = if i == 0 { Some(&probe.modes[..solve_count]) } else { out.last().map(|m| &m.modes[..]) };
                    out.push(solve_transverse_modes(&op, solve_count, &opts, guess)?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        chunks.into_iter().flatten().collect()
    };
    let mut degeneracies = Vec::new();
    for (i, s) in per_slice.iter().enumerate() {
        for &m in &s.degenerate_pairs {
            if m + 1 < keep {
                degeneracies.push((i, m));
            }
        }
    }
    if !degeneracies.is_empty() {
        log::info!("{} degenerate mode pairs flagged across slices", degeneracies.len());
    }

    let energies: Vec<Vec<f64>> = per_slice.iter().map(|s| s.energies.clone()).collect();
    let modes: Vec<Vec<Vec<f64>>> = per_slice.iter_mut().map(|s| std::mem::take(&mut s.modes)).collect();
    let raw = ModeBundle {
        grid: req.grid,
        slices: req.slices.to_vec(),
        energies,
        modes,
        dmodes: Vec::new(),
        d2modes: Vec::new(),
        overlap_log: Vec::new(),
        degeneracies,
    };
    let mut aligned = align_and_differentiate(raw, keep)?;
    if !cs.is_hard_wall() {
        lipschitz_warning(&aligned, cs);
    }
    aligned.energies.iter_mut().for_each(|e| e.truncate(keep));
    Ok(aligned)
}

fn lipschitz_warning(b: &ModeBundle, cs: &CrossSection) {
    let h = b.spacing();
    for i in 0..b.n_slices() - 1 {
        let Ok(vd) = cs.potential_u1_derivative_on(&b.grid, b.slices[i]) else { return };
        let bound = vd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for m in 0..b.n_modes() {
            let jump = (b.energies[i + 1][m] - b.energies[i][m]).abs();
            if jump > 1.5 * h * bound + 1e-12 {
                log::warn!("mode {m} energy jumps by {jump:e} between u1 = {} and {} (Lipschitz bound {:e})", b.slices[i], b.slices[i + 1], h * bound);
            }
        }
    }
}

fn overlap(grid: &TransverseGrid, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| grid.inner(&a[i], &b[j]))
}

/// Fixes signs, order and degenerate-block rotations so that modes vary
/// smoothly along the slices, then differentiates them. Only the first
/// `keep` modes are checked for tracking ambiguity and retained.
pub fn align_and_differentiate(mut b: ModeBundle, keep: usize) -> Result<ModeBundle> {
    let ns = b.n_slices();
    let grid = b.grid;
    let mut log = Vec::with_capacity(ns.saturating_sub(1));
    for i in 1..ns {
        let m = b.modes[i].len();
        let o = overlap(&grid, &b.modes[i - 1], &b.modes[i]);
        // greedy assignment by overlap magnitude
        let mut pairs: Vec<(usize, usize, f64)> = (0..m).flat_map(|a| (0..m).map(move |c| (a, c))).map(|(a, c)| (a, c, o[(a, c)].abs())).collect();
        pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
        let mut perm = vec![usize::MAX; m];
        let mut used = vec![false; m];
        for (a, c, _) in pairs {
            if perm[a] == usize::MAX && !used[c] {
                perm[a] = c;
                used[c] = true;
            }
        }
        let cur_modes: Vec<Vec<f64>> = perm.iter().map(|&c| b.modes[i][c].clone()).collect();
        let cur_e: Vec<f64> = perm.iter().map(|&c| b.energies[i][c]).collect();
        b.modes[i] = cur_modes;
        b.energies[i] = cur_e;

        // rotate within degenerate blocks (orthogonal Procrustes)
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&x, &y| b.energies[i][x].total_cmp(&b.energies[i][y]));
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && (b.energies[i][idx[end]] - b.energies[i][idx[end - 1]]).abs() < DEGENERACY_THRESHOLD {
                end += 1;
            }
            if end - start > 1 {
                let slots: Vec<usize> = idx[start..end].to_vec();
                let k = slots.len();
                let ob = DMatrix::from_fn(k, k, |p, q| grid.inner(&b.modes[i - 1][slots[p]], &b.modes[i][slots[q]]));
                let svd = ob.svd(true, true);
                let r = svd.v_t.unwrap().transpose() * svd.u.unwrap().transpose();
                let old: Vec<Vec<f64>> = slots.iter().map(|&s| b.modes[i][s].clone()).collect();
                for (q, &s) in slots.iter().enumerate() {
                    let mut v = vec![0.0; grid.len()];
                    for (p, src) in old.iter().enumerate() {
                        let c = r[(p, q)];
                        v.iter_mut().zip(src).for_each(|(x, y)| *x += c * y);
                    }
                    b.modes[i][s] = v;
                }
            }
            start = end;
        }

        // signs
        let mut o = overlap(&grid, &b.modes[i - 1], &b.modes[i]);
        for c in 0..m {
            if o[(c, c)] < 0.0 {
                b.modes[i][c].iter_mut().for_each(|x| *x = -*x);
                for a in 0..m {
                    o[(a, c)] = -o[(a, c)];
                }
            }
        }
        for a in 0..keep.min(m) {
            if o[(a, a)] < 0.5 {
                return Err(Error::TrackingAmbiguity { u1_prev: b.slices[i - 1], u1_next: b.slices[i], mode: a, overlap: o[(a, a)] });
            }
        }
        log.push(o.view((0, 0), (keep.min(m), keep.min(m))).into_owned());
    }
    for i in 0..ns {
        b.modes[i].truncate(keep);
        b.energies[i].truncate(keep);
    }
    b.overlap_log = log;
    let (d1, d2) = slice_derivatives(&b.modes, b.spacing());
    b.dmodes = d1;
    b.d2modes = d2;
    Ok(b)
}

/// Second-order finite differences along the slice index: centered in the
/// interior, one-sided at both ends.
pub fn slice_derivatives(modes: &[Vec<Vec<f64>>], h: f64) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>) {
    let ns = modes.len();
    let nm = modes[0].len();
    let np = modes[0][0].len();
    let comb = |i: usize, m: usize, terms: &[(usize, f64)], scale: f64| -> Vec<f64> {
        let mut out = vec![0.0; np];
        for &(s, c) in terms {
            out.iter_mut().zip(&modes[s][m]).for_each(|(o, v)| *o += c * v);
        }
        let _ = i;
        out.iter_mut().for_each(|o| *o *= scale);
        out
    };
    let mut d1 = Vec::with_capacity(ns);
    let mut d2 = Vec::with_capacity(ns);
    for i in 0..ns {
        let (t1, t2): (Vec<(usize, f64)>, Vec<(usize, f64)>) = if i == 0 {
            (vec![(0, -3.0), (1, 4.0), (2, -1.0)], vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)])
        } else if i == ns - 1 {
            (vec![(i, 3.0), (i - 1, -4.0), (i - 2, 1.0)], vec![(i, 2.0), (i - 1, -5.0), (i - 2, 4.0), (i - 3, -1.0)])
        } else {
            (vec![(i + 1, 1.0), (i - 1, -1.0)], vec![(i + 1, 1.0), (i, -2.0), (i - 1, 1.0)])
        };
        d1.push((0..nm).map(|m| comb(i, m, &t1, 0.5 / h)).collect());
        d2.push((0..nm).map(|m| comb(i, m, &t2, 1.0 / (h * h))).collect());
    }
    (d1, d2)
}
