//! Low-lying spectra of the effective longitudinal operators.

use serde::Serialize;

use crate::effective::EffectiveHamiltonian;
use crate::error::{Error, Result};
use crate::linalg::{lowest_eigenpairs, BandCholesky, CsrMatrix, DavidsonOptions, SymOperator};

#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub tier: &'static str,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `profiles[state][channel][slice]` on all slices, zero at both ends.
    pub profiles: Vec<Vec<Vec<f64>>>,
    /// `sum_i |psi_m(u_i)|^2 h` per state and channel.
    pub weights: Vec<Vec<f64>>,
    /// Lowest channel potential at the guide ends.
    pub threshold: f64,
    pub residuals: Vec<f64>,
}

impl SpectralResult {
    /// Whether each state lies below the asymptotic threshold.
    pub fn bound(&self) -> Vec<bool> {
        self.eigenvalues.iter().map(|e| *e < self.threshold).collect()
    }
}

/// Band Cholesky factor of `A - sigma` with `sigma` just below the lowest
/// eigenvalue, located by bisecting on positive definiteness between the
/// Gershgorin bound and the smallest diagonal entry.
fn shift_below_spectrum(a: &CsrMatrix) -> Result<BandCholesky> {
    let diag = a.diagonal();
    let scale = diag.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut lo = a.gershgorin_lower() - 1e-3 * scale;
    BandCholesky::factor(a, lo)?;
    let mut hi = diag.iter().copied().fold(f64::INFINITY, f64::min);
    for _ in 0..60 {
        if hi - lo <= 1e-6 * (hi.abs() + 1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if BandCholesky::factor(a, mid).is_ok() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BandCholesky::factor(a, lo - 0.01 * (lo.abs() + 1.0))
}

/// Lowest `n_states` eigenpairs, shift-inverted with a band Cholesky factor
/// placed just below the spectrum.
pub fn solve_spectrum(h: &EffectiveHamiltonian, n_states: usize, tol: f64) -> Result<SpectralResult> {
    let a = &h.assembled;
    let dim = a.dim();
    if n_states == 0 || n_states > dim {
        return Err(Error::DimensionMismatch(format!("requested {n_states} states of a {dim}-dimensional operator")));
    }
    let prec = shift_below_spectrum(a)?;
    let opts = DavidsonOptions { n_eig: n_states, tol, dense_cutoff: 400, ..Default::default() };
    let res = lowest_eigenpairs(a, &prec, &opts, None)?;
    let ns = h.u1.len();
    let step = (h.u1[ns - 1] - h.u1[0]) / (ns - 1) as f64;
    let ch = h.channels();
    let norm = step.sqrt();
    let mut profiles = Vec::with_capacity(n_states);
    let mut weights = Vec::with_capacity(n_states);
    for v in &res.vectors {
        // fix the overall sign so the largest entry is positive
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        let mut p = vec![vec![0.0; ns]; ch];
        for k in 0..ns - 2 {
            for m in 0..ch {
                p[m][k + 1] = sign * v[k * ch + m] / norm;
            }
        }
        weights.push(p.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>() * step).collect());
        profiles.push(p);
    }
    Ok(SpectralResult { tier: h.tier.tag.tag(), eigenvalues: res.values, profiles, weights, threshold: h.threshold(), residuals: res.residuals })
}
