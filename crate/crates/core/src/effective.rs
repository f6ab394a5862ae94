//! Effective longitudinal Hamiltonians at each approximation tier, the
//! merged single-kinetic-term representation, and closed-form single-mode
//! potentials for twisted and shifted guides.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::couplings::CouplingSet;
use crate::diabatic::{slice_derivative, solve_lyapunov};
use crate::error::{Error, Result};
use crate::geometry::SliceGeometry;
use crate::linalg::{comm, CsrMatrix, TripletBuilder};
use crate::transverse::{CrossSection, ModeBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TierTag {
    BornOppenheimer,
    SingleModeBh,
    SubsetBh,
    SubsetBhMerged,
}

impl TierTag {
    pub const ALL: [TierTag; 4] = [TierTag::BornOppenheimer, TierTag::SingleModeBh, TierTag::SubsetBh, TierTag::SubsetBhMerged];

    pub fn tag(self) -> &'static str {
        match self {
            TierTag::BornOppenheimer => "born_oppenheimer",
            TierTag::SingleModeBh => "single_mode_bh",
            TierTag::SubsetBh => "subset_bh",
            TierTag::SubsetBhMerged => "subset_bh_merged",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == s).ok_or_else(|| Error::InvalidTier(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproximationTier {
    pub tag: TierTag,
    pub subset: Vec<usize>,
}

impl ApproximationTier {
    pub fn new(tag: TierTag, subset: Vec<usize>) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidTier(format!("{} needs a non-empty subset", tag.tag())));
        }
        if tag == TierTag::SingleModeBh && subset.len() != 1 {
            return Err(Error::InvalidTier(format!("single_mode_bh needs exactly one mode, got {}", subset.len())));
        }
        Ok(Self { tag, subset })
    }
}

/// Matrices of the merged form `-(d + F') D (d + F') / 2 + V'BH` on one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimedSlice {
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub vbh: DMatrix<f64>,
    /// `d/du1 [F', D]` as used in `c`.
    pub d_comm: DMatrix<f64>,
}

/// Solves `2F = F'D + DF'` per slice and forms `C'` and `V'BH`; the
/// arc-length derivative of `[F', D]` is differenced across slices.
pub fn merge_kinetic(set: &CouplingSet) -> Result<Vec<PrimedSlice>> {
    let fp: Vec<DMatrix<f64>> = set
        .slices
        .iter()
        .map(|s| solve_lyapunov(&s.d, &s.f).map(|x| (&x - x.transpose()) * 0.5))
        .collect::<Result<_>>()?;
    let x: Vec<DMatrix<f64>> = fp.iter().zip(&set.slices).map(|(f, s)| comm(f, &s.d)).collect();
    let xd = slice_derivative(&x, set.spacing());
    Ok(set
        .slices
        .iter()
        .zip(fp)
        .zip(xd)
        .map(|((s, f), d_comm)| {
            let c = &s.f * &s.f + &d_comm * 0.5 - &f * &s.d * &f;
            let vbh = &s.vbh - &c * 0.5;
            PrimedSlice { f, c, vbh, d_comm }
        })
        .collect())
}

/// Per-slice blocks of the discretized operator
/// `P - (1/2) [d W d + {F, d}]` with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub tier: ApproximationTier,
    /// All slices, including the two Dirichlet end points.
    pub u1: Vec<f64>,
    /// Diagonal block potential, including `-F^2/2`.
    pub potential: Vec<DMatrix<f64>>,
    pub derivative: Vec<DMatrix<f64>>,
    pub weight: Vec<DMatrix<f64>>,
    /// Operator on interior slices, slice-major with the channel fastest.
    pub assembled: CsrMatrix,
}

impl EffectiveHamiltonian {
    pub fn channels(&self) -> usize {
        self.tier.subset.len()
    }

    pub fn interior(&self) -> &[f64] {
        &self.u1[1..self.u1.len() - 1]
    }

    /// Lowest channel threshold `min_m P_mm` over the two guide ends.
    pub fn threshold(&self) -> f64 {
        let ends = [&self.potential[0], self.potential.last().unwrap()];
        ends.iter().flat_map(|p| p.diagonal().iter().copied().collect::<Vec<_>>()).fold(f64::INFINITY, f64::min)
    }
}

fn assemble_blocks(u1: &[f64], potential: &[DMatrix<f64>], derivative: &[DMatrix<f64>], weight: &[DMatrix<f64>]) -> Result<CsrMatrix> {
    let ns = u1.len();
    if ns < 3 {
        return Err(Error::InvalidGrid("need at least one interior slice".into()));
    }
    let h = (u1[ns - 1] - u1[0]) / (ns - 1) as f64;
    let n = potential[0].nrows();
    let interior = ns - 2;
    let mid = |m: &[DMatrix<f64>], i: usize| (&m[i] + &m[i + 1]) * 0.5;
    let mut b = TripletBuilder::new(n * interior);
    for k in 0..interior {
        let i = k + 1;
        let wp = mid(weight, i);
        let wm = mid(weight, i - 1);
        let diag = &potential[i] + (&wp + &wm) * (0.5 / (h * h));
        for r in 0..n {
            for c in 0..n {
                b.add(k * n + r, k * n + c, diag[(r, c)]);
            }
        }
        if k + 1 < interior {
            let off = (&wp / (h * h) + mid(derivative, i) / h) * -0.5;
            for r in 0..n {
                for c in 0..n {
                    b.add(k * n + r, (k + 1) * n + c, off[(r, c)]);
                    b.add((k + 1) * n + c, k * n + r, off[(r, c)]);
                }
            }
        }
    }
    Ok(b.build())
}

/// Extra single-mode inputs: `||d1 phi_m||^2` and the curvature per slice.
#[derive(Debug, Clone)]
pub struct SingleModeInputs {
    pub derivative_norm: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl SingleModeInputs {
    pub fn from_bundle(bundle: &ModeBundle, geom: &[SliceGeometry], mode: usize) -> Self {
        let g = &bundle.grid;
        Self {
            derivative_norm: bundle.dmodes.iter().map(|d| g.inner(&d[mode], &d[mode])).collect(),
            kappa: geom.iter().map(|s| s.curve.kappa).collect(),
        }
    }
}

/// Assembles the tier operator. `single` is needed for the two lowest-order
/// tiers, `primed` for the merged tier.
pub fn assemble_effective(set: &CouplingSet, tier: &ApproximationTier, single: Option<&SingleModeInputs>, primed: Option<&[PrimedSlice]>) -> Result<EffectiveHamiltonian> {
    let pos: Vec<usize> = tier
        .subset
        .iter()
        .map(|m| set.subset.iter().position(|x| x == m).ok_or_else(|| Error::InvalidTier(format!("mode {m} is not in the coupling subset"))))
        .collect::<Result<_>>()?;
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(pos.len(), pos.len(), |a, b| m[(pos[a], pos[b])]);
    let n = pos.len();
    let u1 = set.u1();
    let eye = DMatrix::<f64>::identity(n, n);
    let (potential, derivative, weight): (Vec<_>, Vec<_>, Vec<_>) = match tier.tag {
        TierTag::BornOppenheimer | TierTag::SingleModeBh => {
            let inp = single.ok_or_else(|| Error::InvalidTier(format!("{} needs curvature and mode-derivative data", tier.tag.tag())))?;
            set.slices
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut p = pick(&s.v) - &eye * (inp.kappa[i] * inp.kappa[i] / 8.0);
                    if tier.tag == TierTag::SingleModeBh {
                        p += &eye * (0.5 * inp.derivative_norm[i]);
                    }
                    (p, DMatrix::zeros(n, n), eye.clone())
                })
                .fold((vec![], vec![], vec![]), |mut acc, (p, f, w)| {
                    acc.0.push(p);
                    acc.1.push(f);
                    acc.2.push(w);
                    acc
                })
        }
        TierTag::SubsetBh => {
            if pos.len() != set.subset.len() {
                return Err(Error::InvalidTier("subset_bh must use the subset the couplings were built for".into()));
            }
            let mut p = Vec::new();
            let mut f = Vec::new();
            let mut w = Vec::new();
            for s in &set.slices {
                p.push(&s.v + &s.vbh - (&s.c + &s.f * &s.f) * 0.5);
                f.push(s.f.clone());
                w.push(s.d.clone());
            }
            (p, f, w)
        }
        TierTag::SubsetBhMerged => {
            if pos.len() != set.subset.len() {
                return Err(Error::InvalidTier("subset_bh_merged must use the subset the couplings were built for".into()));
            }
            let primed = primed.ok_or(Error::MissingPrimedMatrices)?;
            if primed.len() != set.slices.len() {
                return Err(Error::MissingPrimedMatrices);
            }
            let mut p = Vec::new();
            let mut f = Vec::new();
            let mut w = Vec::new();
            for (s, q) in set.slices.iter().zip(primed) {
                // (d + F') D (d + F') expanded with F'D + DF' = 2F
                let feff = (&q.f * &s.d + &s.d * &q.f) * 0.5;
                let scalar = &q.f * &s.d * &q.f - &q.d_comm * 0.5;
                p.push(&s.v + &q.vbh - (&s.c + scalar) * 0.5);
                f.push(feff);
                w.push(s.d.clone());
            }
            (p, f, w)
        }
    };
    let assembled = assemble_blocks(&u1, &potential, &derivative, &weight)?;
    let defect = assembled.symmetry_defect();
    if defect > 1e-12 {
        log::warn!("assembled {} operator has symmetry defect {defect:e}", tier.tag.tag());
    }
    Ok(EffectiveHamiltonian { tier: tier.clone(), u1, potential, derivative, weight, assembled })
}

/// Single-mode effective potential contributions along the guide.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleModePotentials {
    pub u1: Vec<f64>,
    /// `-kappa^2 / 8`.
    pub v_geo: Vec<f64>,
    /// `E_m`.
    pub v_surface: Vec<f64>,
    /// `(||d1 phi||^2 + <phi|d1 phi>^2) / 2`.
    pub v_bh_diag: Vec<f64>,
    /// `alpha'^2 ||d_vartheta phi||^2 / 2` for twisted profiles.
    pub v_twist: Option<Vec<f64>>,
    /// `|d'|^2 ||(e . grad) phi||^2 / 2` for shifted profiles.
    pub v_shift: Option<Vec<f64>>,
}

/// Which closed forms to evaluate in [`single_mode_potentials`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClosedForms {
    pub twist: bool,
    pub shift: bool,
}

/// `||d_vartheta phi||^2` with `d_vartheta = u2 d3 - u3 d2` in the Tang frame,
/// using fourth-order centered differences.
pub fn angular_norm(grid: &crate::transverse::TransverseGrid, phi: &[f64]) -> f64 {
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= grid.nx as isize || j >= grid.ny as isize {
            0.0
        } else {
            phi[grid.index(i as usize, j as usize)]
        }
    };
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut acc = 0.0;
    for i in 0..grid.nx as isize {
        for j in 0..grid.ny as isize {
            let dx = (8.0 * (at(i + 1, j) - at(i - 1, j)) - (at(i + 2, j) - at(i - 2, j))) / (12.0 * hx);
            let dy = (8.0 * (at(i, j + 1) - at(i, j - 1)) - (at(i, j + 2) - at(i, j - 2))) / (12.0 * hy);
            let v = grid.x(i as usize) * dy - grid.y(j as usize) * dx;
            acc += v * v;
        }
    }
    acc * grid.weight()
}

pub fn single_mode_potentials(bundle: &ModeBundle, geom: &[SliceGeometry], cs: &CrossSection, mode: usize, closed: ClosedForms) -> Result<SingleModePotentials> {
    if mode >= bundle.n_modes() {
        return Err(Error::config("modes.subset", format!("mode {mode} was not computed")));
    }
    if closed.twist && !cs.has_twist() {
        return Err(Error::PresetMismatch { requested: "twist" });
    }
    if closed.shift && !cs.has_shift() {
        return Err(Error::PresetMismatch { requested: "shift" });
    }
    let g = &bundle.grid;
    let ns = bundle.n_slices();
    let v_bh_diag = (0..ns)
        .map(|i| {
            let (p, d) = (&bundle.modes[i][mode], &bundle.dmodes[i][mode]);
            let c = g.inner(p, d);
            0.5 * (g.inner(d, d) + c * c)
        })
        .collect();
    let v_twist = closed.twist.then(|| {
        (0..ns)
            .map(|i| {
                let rate = cs.twist.jet(bundle.slices[i]).d1;
                0.5 * rate * rate * angular_norm(g, &bundle.modes[i][mode])
            })
            .collect()
    });
    let v_shift = closed.shift.then(|| {
        (0..ns)
            .map(|i| {
                let u = bundle.slices[i];
                let dd = [cs.shift[0].jet(u).d1, cs.shift[1].jet(u).d1];
                let speed2 = dd[0] * dd[0] + dd[1] * dd[1];
                if speed2 == 0.0 {
                    return 0.0;
                }
                let e = [dd[0] / speed2.sqrt(), dd[1] / speed2.sqrt()];
                0.5 * speed2 * g.directional_kinetic(&bundle.modes[i][mode], e)
            })
            .collect()
    });
    Ok(SingleModePotentials {
        u1: bundle.slices.clone(),
        v_geo: geom.iter().map(|s| -s.curve.kappa * s.curve.kappa / 8.0).collect(),
        v_surface: bundle.energies.iter().map(|e| e[mode]).collect(),
        v_bh_diag,
        v_twist,
        v_shift,
    })
}
