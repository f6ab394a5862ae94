//! Coupling matrices between transverse modes: exact quadrature, truncated
//! thin-guide series, and Hellmann-Feynman estimates of the derivative
//! coupling.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SliceGeometry;
use crate::profile::Profile;
use crate::transverse::{CrossSection, ModeBundle, TransverseGrid};

/// Highest total power of `nhat` and `bhat` a moment table may hold.
pub const ORDER_CAP: usize = 8;
/// Energy gap below which Hellmann-Feynman entries are not reported.
pub const HF_DEGENERACY: f64 = 1e-6;

/// Coupling matrices on one slice, restricted to the subset.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSlice {
    pub u1: f64,
    /// `diag(V1 + E_m)`.
    pub v: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Skew-symmetric derivative coupling.
    pub f: DMatrix<f64>,
    /// Second-order coupling with the product sum over every computed mode.
    pub g: DMatrix<f64>,
    /// Born-Huang potential with the product sum over the subset only.
    pub vbh: DMatrix<f64>,
    /// `<phi_m|dD/du1|phi_n>`.
    pub d_ring: DMatrix<f64>,
    /// `<d1 phi_m|D|phi_n>`.
    pub l: DMatrix<f64>,
}

/// Couplings on every slice for one mode subset.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    pub subset: Vec<usize>,
    pub slices: Vec<CouplingSlice>,
    /// Largest Hermiticity defect removed by symmetrization.
    pub symmetry_defect: f64,
    /// Largest contribution of the highest computed mode to the product sum in `G`.
    pub tail_estimate: f64,
}

impl CouplingSet {
    pub fn n_modes(&self) -> usize {
        self.subset.len()
    }

    pub fn spacing(&self) -> f64 {
        let n = self.slices.len();
        (self.slices[n - 1].u1 - self.slices[0].u1) / (n - 1) as f64
    }

    pub fn u1(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.u1).collect()
    }
}

/// Stacks mode vectors into the columns of a matrix.
fn columns(v: &[Vec<f64>]) -> DMatrix<f64> {
    let n = v[0].len();
    DMatrix::from_iterator(n, v.len(), v.iter().flat_map(|c| c.iter().copied()))
}

/// `<a_m| w |b_n>` with the grid weight.
fn weighted(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>, weight: f64) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (mut row, &x) in aw.row_iter_mut().zip(w) {
        row *= x;
    }
    aw.transpose() * b * weight
}

fn symmetrize(m: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let t = m.transpose();
    let defect = (&m - &t).amax();
    ((m + t) * 0.5, defect)
}

fn restrict(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// Pointwise `D`, `dD/du1` and `C` weights on the grid. Points where the
/// tube folds over carry zero weight; modes vanish there by construction.
pub fn slice_fields(grid: &TransverseGrid, geom: &SliceGeometry) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let (mut d, mut dd, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (x, y) = grid.point(k);
        if let Some(w) = geom.weights(x, y) {
            d[k] = w.d;
            dd[k] = w.d_dot;
            c[k] = w.c;
        }
    }
    (d, dd, c)
}

fn check_subset(subset: &[usize], modes: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::config("modes.subset", "subset is empty"));
    }
    if let Some(&m) = subset.iter().find(|&&m| m >= modes) {
        return Err(Error::config("modes.subset", format!("mode {m} exceeds the {modes} computed modes")));
    }
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != subset.len() {
        return Err(Error::config("modes.subset", "repeated mode index"));
    }
    Ok(())
}

/// All coupling matrices by direct quadrature on every slice.
pub fn coupling_matrices_exact(bundle: &ModeBundle, geom: &[SliceGeometry], subset: &[usize], v1: &Profile) -> Result<CouplingSet> {
    check_subset(subset, bundle.n_modes())?;
    if geom.len() != bundle.n_slices() {
        return Err(Error::DimensionMismatch(format!("{} slice geometries for {} slices", geom.len(), bundle.n_slices())));
    }
    let grid = bundle.grid;
    let w = grid.weight();
    let m_all = bundle.n_modes();
    let per: Vec<(CouplingSlice, f64, f64)> = (0..bundle.n_slices())
        .into_par_iter()
        .map(|i| {
            let g = &geom[i];
            let (d, dd, c) = slice_fields(&grid, g);
            let phi = columns(&bundle.modes[i]);
            let dphi = columns(&bundle.dmodes[i]);
            let d2phi = columns(&bundle.d2modes[i]);
            let (dm, e1) = symmetrize(weighted(&phi, &d, &phi, w));
            let (cm, e2) = symmetrize(weighted(&phi, &c, &phi, w));
            let (d_ring, e3) = symmetrize(weighted(&phi, &dd, &phi, w));
            let l = weighted(&dphi, &d, &phi, w);
            let f = (l.transpose() - &l) * 0.5;
            let k1 = weighted(&dphi, &dd, &phi, w);
            let k2 = weighted(&d2phi, &d, &phi, w);
            let r = (&k1 + k1.transpose() + &k2 + k2.transpose()) * 0.5;
            let ff = &f * &f;
            let gm = &r - &ff;
            let last = m_all - 1;
            let tail = (0..m_all).flat_map(|a| (0..m_all).map(move |b| (a, b))).map(|(a, b)| (f[(a, last)] * f[(last, b)]).abs()).fold(0.0, f64::max);
            let fs = restrict(&f, subset);
            let vbh = (restrict(&r, subset) - &fs * &fs) * -0.5;
            let v = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(subset.len(), subset.iter().map(|&m| v1.value(g.u1) + bundle.energies[i][m])));
            let slice = CouplingSlice {
                u1: g.u1,
                v,
                d: restrict(&dm, subset),
                c: restrict(&cm, subset),
                f: fs,
                g: restrict(&gm, subset),
                vbh,
                d_ring: restrict(&d_ring, subset),
                l: restrict(&l, subset),
            };
            (slice, e1.max(e2).max(e3), tail)
        })
        .collect();
    let symmetry_defect = per.iter().map(|p| p.1).fold(0.0, f64::max);
    let tail_estimate = per.iter().map(|p| p.2).fold(0.0, f64::max);
    if symmetry_defect > 1e-10 {
        log::warn!("coupling quadrature asymmetry {symmetry_defect:e} removed by symmetrization");
    }
    log::debug!("highest-mode contribution to the G product sum: {tail_estimate:e}");
    Ok(CouplingSet { subset: subset.to_vec(), slices: per.into_iter().map(|p| p.0).collect(), symmetry_defect, tail_estimate })
}

/// Matrix elements `<a_m| nhat^l bhat^k |b_n>` on one slice for
/// `l + k <= degree`, between modes and their first and second derivatives.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub degree: usize,
    /// `<phi_m| nhat^l bhat^k |phi_n>`, indexed `[l][k]`.
    pub plain: Vec<Vec<DMatrix<f64>>>,
    /// `<phi_m| nhat^l bhat^k |d1 phi_n>`.
    pub first: Vec<Vec<DMatrix<f64>>>,
    /// `<phi_m| nhat^l bhat^k |d1^2 phi_n>`.
    pub second: Vec<Vec<DMatrix<f64>>>,
    /// `max |kappa nhat|` over grid points where any mode is nonzero.
    pub xi_max: f64,
}

impl MomentTable {
    pub fn build(bundle: &ModeBundle, geom: &SliceGeometry, slice: usize, degree: usize) -> Result<Self> {
        if degree > ORDER_CAP {
            return Err(Error::OrderTooHigh { order: degree, cap: ORDER_CAP });
        }
        let grid = bundle.grid;
        let w = grid.weight();
        let n = grid.len();
        let (mut nh, mut bh) = (vec![0.0; n], vec![0.0; n]);
        let mut xi_max = 0.0f64;
        for k in 0..n {
            let (x, y) = grid.point(k);
            let (a, b) = crate::geometry::projections(geom.theta, x, y);
            nh[k] = a;
            bh[k] = b;
            if bundle.modes[slice].iter().any(|m| m[k] != 0.0) {
                xi_max = xi_max.max((geom.curve.kappa * a).abs());
            }
        }
        let phi = columns(&bundle.modes[slice]);
        let dphi = columns(&bundle.dmodes[slice]);
        let d2phi = columns(&bundle.d2modes[slice]);
        let mut plain = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for l in 0..=degree {
            let (mut p, mut f, mut s) = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..=degree - l {
                let wt: Vec<f64> = (0..n).map(|q| nh[q].powi(l as i32) * bh[q].powi(k as i32)).collect();
                p.push(symmetrize(weighted(&phi, &wt, &phi, w)).0);
                f.push(weighted(&phi, &wt, &dphi, w));
                s.push(weighted(&phi, &wt, &d2phi, w));
            }
            plain.push(p);
            first.push(f);
            second.push(s);
        }
        Ok(Self { degree, plain, first, second, xi_max })
    }

    pub fn moment(&self, l: usize, k: usize) -> &DMatrix<f64> {
        &self.plain[l][k]
    }
}

/// Single moment matrix `<phi_m| nhat^l bhat^k |phi_n>` on one slice.
pub fn moment_matrix(bundle: &ModeBundle, geom: &SliceGeometry, slice: usize, l: usize, k: usize) -> Result<DMatrix<f64>> {
    let t = MomentTable::build(bundle, geom, slice, l + k)?;
    Ok(t.plain[l][k].clone())
}

/// One contribution to a series-expanded matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTerm {
    pub matrix: &'static str,
    /// Power of the curvature-like small parameter.
    pub power: usize,
    /// Largest entry of the contribution.
    pub size: f64,
}

/// Truncated thin-guide expansions over all modes of a slice.
#[derive(Debug, Clone)]
pub struct SeriesCouplings {
    pub order: usize,
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub ledger: Vec<SeriesTerm>,
}

/// Series coefficients: `D` keeps powers `kappa^l` with `l <= order`, `F`
/// and the single sums of `G` likewise, the double sum of `G` keeps
/// `l + l' <= order`, and `C` keeps `kappa^2/4` plus sums with `l < order`.
pub fn coupling_matrices_series(table: &MomentTable, geom: &SliceGeometry, order: usize) -> Result<SeriesCouplings> {
    if order + 2 > table.degree {
        return Err(Error::OrderTooHigh { order, cap: table.degree.saturating_sub(2) });
    }
    if table.xi_max >= 1.0 {
        return Err(Error::SeriesDomain { u1: geom.u1, value: table.xi_max });
    }
    let cp = geom.curve;
    let (kappa, kd, kdd, tau, td) = (cp.kappa, cp.kappa_dot, cp.kappa_ddot, cp.tau, cp.tau_dot);
    let m = table.plain[0][0].nrows();
    let eye = DMatrix::<f64>::identity(m, m);
    let mut ledger = Vec::new();
    let mut note = |matrix: &'static str, power: usize, t: &DMatrix<f64>| ledger.push(SeriesTerm { matrix, power, size: t.amax() });
    let p = |l: usize, k: usize| &table.plain[l][k];
    let f1 = |l: usize, k: usize| &table.first[l][k];
    let f2 = |l: usize, k: usize| &table.second[l][k];
    let kl = |l: usize| kappa.powi(l as i32);

    let mut d = eye.clone();
    for l in 1..=order {
        let t = p(l, 0) * ((l + 1) as f64 * kl(l));
        note("D", l, &t);
        d += t;
    }

    let mut c = &eye * (0.25 * kappa * kappa);
    note("C", 0, &c);
    let a1 = kdd - kappa * tau * tau;
    let b1 = 2.0 * kd * tau + kappa * td;
    for l in 0..order {
        let lf = l as f64;
        if l >= 1 {
            let t = p(l, 0) * (0.25 * kappa * kappa * (lf + 1.0) * kl(l));
            note("C", l, &t);
            c += t;
        }
        let t = (p(l + 1, 0) * a1 + p(l, 1) * b1) * (0.25 * (lf + 1.0) * (lf + 2.0) * kl(l));
        note("C", l, &t);
        c += t;
        let q2 = p(l + 2, 0) * (kd * kd) + p(l + 1, 1) * (2.0 * kd * kappa * tau) + p(l, 2) * (kappa * kappa * tau * tau);
        let t = q2 * (5.0 / 24.0 * (lf + 1.0) * (lf + 2.0) * (lf + 3.0) * kl(l));
        note("C", l, &t);
        c += t;
    }

    let f0 = f1(0, 0).clone();
    let mut f = (&f0 - f0.transpose()) * 0.5;
    note("F", 0, &f);
    for l in 1..=order {
        let x = f1(l, 0);
        let t = (x - x.transpose()) * (0.5 * (l + 1) as f64 * kl(l));
        note("F", l, &t);
        f += t;
    }

    let mut g = DMatrix::<f64>::zeros(m, m);
    for l in 1..=order {
        let lf = l as f64;
        let x = f1(l, 0);
        let t = (x + x.transpose()) * (0.5 * kd * lf * (lf + 1.0) * kappa.powi(l as i32 - 1));
        note("G", l, &t);
        g += t;
        let y = f1(l - 1, 1);
        let t = (y + y.transpose()) * (0.5 * tau * lf * (lf + 1.0) * kl(l));
        note("G", l, &t);
        g += t;
        let z = f2(l, 0);
        let t = (z + z.transpose()) * (0.5 * (lf + 1.0) * kl(l));
        note("G", l, &t);
        g += t;
    }
    for l in 0..=order {
        for lp in 0..=order - l {
            if l == 0 && lp == 0 {
                continue;
            }
            let (x, y) = (f1(l, 0), f1(lp, 0));
            let prod = x * y.transpose() + x.transpose() * y - x * y - x.transpose() * y.transpose();
            let t = prod * (0.25 * ((l + 1) * (lp + 1)) as f64 * kl(l + lp));
            note("G", l + lp, &t);
            g += t;
        }
    }
    Ok(SeriesCouplings { order, d, c, f, g, ledger })
}

/// Which Hellmann-Feynman form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfVariant {
    /// `<m|dV/du1|n> / (E_n - E_m)`.
    Plain,
    /// Metric-weighted form that accounts for `D != 1`.
    Generalized,
}

/// Off-diagonal derivative-coupling estimates on one slice. Entries with
/// `|E_m - E_n| < HF_DEGENERACY` and diagonal entries are `None`.
pub fn hellmann_feynman_f(bundle: &ModeBundle, cs: &CrossSection, geom: &SliceGeometry, slice: usize, variant: HfVariant) -> Result<Vec<Vec<Option<f64>>>> {
    let grid = bundle.grid;
    let w = grid.weight();
    let u1 = bundle.slices[slice];
    let vdot = cs.potential_u1_derivative_on(&grid, u1)?;
    let m = bundle.n_modes();
    let modes = &bundle.modes[slice];
    let e = &bundle.energies[slice];
    let mut out = vec![vec![None; m]; m];
    match variant {
        HfVariant::Plain => {
            let phi = columns(modes);
            let vm = weighted(&phi, &vdot, &phi, w);
            for a in 0..m {
                for b in 0..m {
                    let gap = e[b] - e[a];
                    if a != b && gap.abs() >= HF_DEGENERACY {
                        out[a][b] = Some(vm[(a, b)] / gap);
                    }
                }
            }
        }
        HfVariant::Generalized => {
            let (d, _, _) = slice_fields(&grid, geom);
            let dmodes = &bundle.dmodes[slice];
            let edot = energy_derivatives(bundle, slice);
            let lap = |f: &[f64]| grid.laplacian(f);
            let dtimes = |f: &[f64]| -> Vec<f64> { f.iter().zip(&d).map(|(x, y)| x * y).collect() };
            let lap_phi: Vec<Vec<f64>> = modes.iter().map(|f| lap(f)).collect();
            let lap_dphi: Vec<Vec<f64>> = dmodes.iter().map(|f| lap(f)).collect();
            let d_phi: Vec<Vec<f64>> = modes.iter().map(|f| dtimes(f)).collect();
            let d_dphi: Vec<Vec<f64>> = dmodes.iter().map(|f| dtimes(f)).collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * w;
            // <a|[D, H]|b> = -1/2 (<D a|lap b> - <lap a|D b>)
            let comm = |da: &[f64], la: &[f64], lb: &[f64], db: &[f64]| -0.5 * (dot(da, lb) - dot(la, db));
            let dv: Vec<f64> = d.iter().zip(&vdot).map(|(x, y)| 2.0 * x * y).collect();
            let phi = columns(modes);
            let anti = weighted(&phi, &dv, &phi, w);
            let dm = weighted(&phi, &d, &phi, w);
            for a in 0..m {
                for b in 0..m {
                    let gap = e[b] - e[a];
                    if a == b || gap.abs() < HF_DEGENERACY {
                        continue;
                    }
                    let t1 = anti[(a, b)];
                    let t2 = comm(&d_phi[a], &lap_phi[a], &lap_dphi[b], &d_dphi[b]);
                    let t3 = comm(&d_dphi[a], &lap_dphi[a], &lap_phi[b], &d_phi[b]);
                    let t4 = (edot[a] + edot[b]) * dm[(a, b)];
                    out[a][b] = Some(0.5 * (t1 + t2 - t3 - t4) / gap);
                }
            }
        }
    }
    Ok(out)
}

/// Second-order finite-difference `dE_m/du1` at one slice.
pub fn energy_derivatives(bundle: &ModeBundle, i: usize) -> Vec<f64> {
    let h = bundle.spacing();
    let e = &bundle.energies;
    let ns = bundle.n_slices();
    (0..bundle.n_modes())
        .map(|m| {
            if i == 0 {
                (-3.0 * e[0][m] + 4.0 * e[1][m] - e[2][m]) / (2.0 * h)
            } else if i == ns - 1 {
                (3.0 * e[i][m] - 4.0 * e[i - 1][m] + e[i - 2][m]) / (2.0 * h)
            } else {
                (e[i + 1][m] - e[i - 1][m]) / (2.0 * h)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{slice_geometry, uniform_grid, CurveSpec};
    use crate::profile::Profile;
    use crate::transverse::{compute_mode_bundle, BundleRequest, CrossSection, Family, SolveOptions, TransverseGrid};

    fn bundle(cs: &CrossSection, curve: &CurveSpec, n: usize, slices: usize, modes: usize) -> (ModeBundle, Vec<SliceGeometry>) {
        let g = TransverseGrid::new(n, n, 5.0, 5.0).unwrap();
        let u = uniform_grid(curve.u1_min, curve.u1_max, slices);
        let geom = slice_geometry(curve, &u, 0.0).unwrap();
        let req = BundleRequest { grid: g, cross_section: cs, slices: &u, modes, tube: None, solve: SolveOptions::default() };
        (compute_mode_bundle(&req).unwrap(), geom)
    }

    #[test]
    fn straight_uniform_guide_has_trivial_couplings() {
        let (b, geom) = bundle(&CrossSection::harmonic(1.0), &CurveSpec::straight(0.0, 1.0), 21, 6, 3);
        let set = coupling_matrices_exact(&b, &geom, &[0, 1, 2], &Profile::default()).unwrap();
        for s in &set.slices {
            assert!((&s.d - DMatrix::identity(3, 3)).amax() < 1e-10);
            assert!(s.c.amax() < 1e-14 && s.f.amax() < 1e-14 && s.g.amax() < 1e-14 && s.vbh.amax() < 1e-14);
        }
    }

    #[test]
    fn arc_curvature_term_leads_with_kappa_squared_over_four() {
        let kappa = 0.01;
        let (b, geom) = bundle(&CrossSection::harmonic(4.0), &CurveSpec::circular_arc(0.0, 1.0, kappa), 31, 5, 1);
        let set = coupling_matrices_exact(&b, &geom, &[0], &Profile::default()).unwrap();
        let c = set.slices[2].c[(0, 0)];
        assert!((c - 0.25 * kappa * kappa).abs() < 1e-2 * 0.25 * kappa * kappa, "{c}");
    }

    #[test]
    fn ground_state_moments() {
        let (b, geom) = bundle(&CrossSection::harmonic(1.0), &CurveSpec::straight(0.0, 1.0), 61, 4, 1);
        let t = MomentTable::build(&b, &geom[0], 0, 2).unwrap();
        assert!((t.moment(0, 0)[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((t.moment(2, 0)[(0, 0)] - 0.5).abs() < 5e-3);
        assert!(t.moment(1, 0)[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn order_one_curvature_series_has_six_terms() {
        let curve = CurveSpec::bump(0.0, 1.0, Profile::Sine { offset: 0.1, amplitude: 0.05, frequency: 2.0, phase: 0.3 }, Profile::Linear { value: 0.2, slope: 0.1 });
        let cs = CrossSection::new(Family::HarmonicAnisotropic { omega2: Profile::Constant(1.0), omega3: Profile::Constant(1.5) });
        let (b, geom) = bundle(&cs, &curve, 21, 5, 3);
        let t = MomentTable::build(&b, &geom[2], 2, 3).unwrap();
        let s = coupling_matrices_series(&t, &geom[2], 1).unwrap();
        let cp = geom[2].curve;
        let eye = DMatrix::<f64>::identity(3, 3);
        let six = &eye * (cp.kappa * cp.kappa / 4.0)
            + t.moment(1, 0) * (cp.kappa_ddot / 2.0)
            + t.moment(0, 1) * (cp.kappa_dot * cp.tau)
            + t.moment(0, 1) * (cp.kappa * cp.tau_dot / 2.0)
            + t.moment(2, 0) * (1.25 * cp.kappa_dot * cp.kappa_dot)
            + t.moment(0, 2) * (1.25 * cp.kappa * cp.kappa * cp.tau * cp.tau);
        // the kappa tau^2 nhat piece is the only other l = 0 contribution
        let extra = t.moment(1, 0) * (-0.5 * cp.kappa * cp.tau * cp.tau) + t.moment(1, 1) * (2.5 * cp.kappa_dot * cp.kappa * cp.tau);
        assert!((s.c - six - extra).amax() < 1e-14);
    }

    #[test]
    fn order_zero_series_is_lowest_order_limit() {
        let curve = CurveSpec::circular_arc(0.0, 1.0, 0.05);
        let cs = CrossSection::harmonic(2.0);
        let (b, geom) = bundle(&cs, &curve, 21, 5, 3);
        let t = MomentTable::build(&b, &geom[1], 1, 2).unwrap();
        let s = coupling_matrices_series(&t, &geom[1], 0).unwrap();
        let eye = DMatrix::<f64>::identity(3, 3);
        assert!((&s.d - &eye).amax() < 1e-10);
        assert!((&s.c - &eye * (0.05f64.powi(2) / 4.0)).amax() < 1e-14);
        assert!(s.g.amax() == 0.0);
    }

    #[test]
    fn series_domain_is_enforced() {
        let (b, geom) = bundle(&CrossSection::harmonic(1.0), &CurveSpec::circular_arc(0.0, 1.0, 0.3), 21, 4, 1);
        let t = MomentTable::build(&b, &geom[0], 0, 3).unwrap();
        assert!(matches!(coupling_matrices_series(&t, &geom[0], 1), Err(Error::SeriesDomain { .. })));
    }
}
