//! Local basis changes within a mode subset: the generator equation
//! `{D, S} = 2F`, the ordered-exponential transformation to a diabatic
//! basis, and transformation rules for every coupling matrix.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};

use crate::couplings::{CouplingSet, CouplingSlice};
use crate::error::{Error, Result};
use crate::linalg::{anticomm, comm, max_abs, polar_unitary};

/// Largest polar correction tolerated in one step of the ordered product.
pub const UNITARITY_TOLERANCE: f64 = 1e-6;

/// Solves `D S + S D = 2 F` for Hermitian positive-definite `D` by
/// diagonalizing `D`. For skew-Hermitian `F` the solution is skew-Hermitian.
pub fn solve_lyapunov<T: ComplexField<RealField = f64>>(d: &DMatrix<T>, f: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = d.nrows();
    if d.ncols() != n || f.nrows() != n || f.ncols() != n {
        return Err(Error::DimensionMismatch(format!("D is {}x{}, F is {}x{}", d.nrows(), d.ncols(), f.nrows(), f.ncols())));
    }
    let herm = (d + d.adjoint()) * T::from_real(0.5);
    let eig = SymmetricEigen::new(herm);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalue: lo });
    }
    let q = &eig.eigenvectors;
    let mut sp = q.adjoint() * f * q;
    for i in 0..n {
        for j in 0..n {
            let scale = 2.0 / (eig.eigenvalues[i] + eig.eigenvalues[j]);
            sp[(i, j)] = sp[(i, j)].clone() * T::from_real(scale);
        }
    }
    Ok(q * sp * q.adjoint())
}

/// Frobenius norm of `{D, S} - 2F`.
pub fn lyapunov_residual<T: ComplexField<RealField = f64>>(d: &DMatrix<T>, f: &DMatrix<T>, s: &DMatrix<T>) -> f64 {
    (anticomm(d, s) - f * T::from_real(2.0)).norm()
}

/// Five-term expression that the kinetic and Born-Huang parts pick up, with
/// opposite signs, under a local basis change generated by `S`.
/// `d_comm` is `d/du1 [S, D]`.
pub fn extra_terms<T: ComplexField<RealField = f64>>(d: &DMatrix<T>, s: &DMatrix<T>, f: &DMatrix<T>, d_comm: &DMatrix<T>) -> DMatrix<T> {
    let half = T::from_real(0.5);
    let ds = anticomm(d, s);
    let s2 = s * s;
    &ds * &ds * T::from_real(-0.25) + anticomm(&ds, f) * half.clone() + d_comm * half.clone() - anticomm(s, f) + anticomm(&s2, d) * half
}

/// The basis change along the guide and what it leaves of `F`.
#[derive(Debug, Clone)]
pub struct GaugeField {
    pub u1: Vec<f64>,
    /// Skew generator with `A' = A S`.
    pub s: Vec<DMatrix<f64>>,
    /// Orthogonal transformation per slice.
    pub a: Vec<DMatrix<f64>>,
    /// Two-mode mixing angle, when the subset has two modes.
    pub gamma: Option<Vec<f64>>,
    /// `F` in the transformed basis.
    pub residual_f: Vec<DMatrix<f64>>,
    pub max_polar_correction: f64,
    /// Largest deviation between the ordered product and the closed-form rotation.
    pub closed_form_defect: Option<f64>,
}

impl GaugeField {
    pub fn residual_sup(&self) -> f64 {
        self.residual_f.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

/// `A^dagger` on every slice from the ordered product of
/// `exp(-(S_i + S_{i+1}) h / 2)` applied on the left, starting from `a0`.
/// Each step is projected back onto the orthogonal group.
pub fn path_ordered<T: ComplexField<RealField = f64>>(s: &[DMatrix<T>], u1: &[f64], a0: &DMatrix<T>) -> Result<(Vec<DMatrix<T>>, f64)> {
    if s.len() != u1.len() {
        return Err(Error::DimensionMismatch(format!("{} generators for {} slices", s.len(), u1.len())));
    }
    let mut adag = a0.adjoint();
    let mut out = Vec::with_capacity(s.len());
    let mut worst = 0.0f64;
    out.push(adag.adjoint());
    for i in 1..s.len() {
        let h = u1[i] - u1[i - 1];
        let gen = (&s[i - 1] + &s[i]) * T::from_real(-0.5 * h);
        let step = gen.exp() * &adag;
        let (q, corr) = polar_unitary(&step);
        if corr > UNITARITY_TOLERANCE {
            return Err(Error::UnitarityDrift { step: i, correction: corr });
        }
        worst = worst.max(corr);
        adag = q;
        out.push(adag.adjoint());
    }
    Ok((out, worst))
}

/// Rotation `A^dagger = [[cos g, -sin g], [sin g, cos g]]`.
pub fn rotation(gamma: f64) -> DMatrix<f64> {
    let (s, c) = gamma.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Two-mode mixing angle `2 int F12 / (D11 + D22)` by the trapezoidal rule.
pub fn mixing_angle(set: &CouplingSet) -> Result<Vec<f64>> {
    if set.n_modes() != 2 {
        return Err(Error::DimensionMismatch(format!("mixing angle needs two modes, subset has {}", set.n_modes())));
    }
    let rate: Vec<f64> = set.slices.iter().map(|s| 2.0 * s.f[(0, 1)] / (s.d[(0, 0)] + s.d[(1, 1)])).collect();
    let mut gamma = vec![0.0; rate.len()];
    for i in 1..rate.len() {
        gamma[i] = gamma[i - 1] + 0.5 * (rate[i] + rate[i - 1]) * (set.slices[i].u1 - set.slices[i - 1].u1);
    }
    Ok(gamma)
}

/// Generator `S` solving `{D, S} = 2F` on every slice.
pub fn diabatic_generator(set: &CouplingSet) -> Result<Vec<DMatrix<f64>>> {
    set.slices.iter().map(|s| solve_lyapunov(&s.d, &s.f).map(|x| (&x - x.transpose()) * 0.5)).collect()
}

/// Transformation to the basis in which `F` vanishes. `a0` defaults to the
/// identity at the first slice.
pub fn adiabatic_to_diabatic(set: &CouplingSet, a0: Option<&DMatrix<f64>>) -> Result<GaugeField> {
    let n = set.n_modes();
    let s = diabatic_generator(set)?;
    let u1 = set.u1();
    let eye = DMatrix::identity(n, n);
    let a0 = a0.unwrap_or(&eye);
    let (a, corr) = path_ordered(&s, &u1, a0)?;
    let residual_f = set
        .slices
        .iter()
        .zip(&s)
        .zip(&a)
        .map(|((c, s), a)| a * (&c.f - anticomm(&c.d, s) * 0.5) * a.transpose())
        .collect();
    let (gamma, closed_form_defect) = if n == 2 {
        let g = mixing_angle(set)?;
        let defect = g.iter().zip(&a).map(|(g, a)| max_abs(&(rotation(*g) * a0.transpose() - a.transpose()))).fold(0.0, f64::max);
        (Some(g), Some(defect))
    } else {
        (None, None)
    };
    Ok(GaugeField { u1, s, a, gamma, residual_f, max_polar_correction: corr, closed_form_defect })
}

/// Centered differences across slices, one-sided second order at the ends.
pub fn slice_derivative(values: &[DMatrix<f64>], h: f64) -> Vec<DMatrix<f64>> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if n < 3 {
                DMatrix::zeros(values[0].nrows(), values[0].ncols())
            } else if i == 0 {
                (&values[0] * -3.0 + &values[1] * 4.0 - &values[2]) / (2.0 * h)
            } else if i == n - 1 {
                (&values[i] * 3.0 - &values[i - 1] * 4.0 + &values[i - 2]) / (2.0 * h)
            } else {
                (&values[i + 1] - &values[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Applies the basis change `A` (with generator `S = A^T A'`) to every
/// component. `d_comm` optionally supplies `d/du1 [S, D]` per slice;
/// otherwise it is differenced across slices.
pub fn gauge_transform(set: &CouplingSet, a: &[DMatrix<f64>], s: &[DMatrix<f64>], d_comm: Option<&[DMatrix<f64>]>) -> Result<CouplingSet> {
    let ns = set.slices.len();
    let n = set.n_modes();
    if a.len() != ns || s.len() != ns {
        return Err(Error::DimensionMismatch(format!("gauge has {} / {} slices, couplings have {ns}", a.len(), s.len())));
    }
    if a.iter().chain(s).any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::DimensionMismatch(format!("gauge matrices must be {n}x{n}")));
    }
    let owned;
    let d_comm = match d_comm {
        Some(x) => x,
        None => {
            let c: Vec<DMatrix<f64>> = set.slices.iter().zip(s).map(|(c, s)| comm(s, &c.d)).collect();
            owned = slice_derivative(&c, set.spacing());
            &owned
        }
    };
    let slices = set
        .slices
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (a, s) = (&a[i], &s[i]);
            let conj = |m: &DMatrix<f64>| a * m * a.transpose();
            let e = extra_terms(&c.d, s, &c.f, &d_comm[i]);
            CouplingSlice {
                u1: c.u1,
                v: conj(&c.v),
                d: conj(&c.d),
                c: conj(&c.c),
                f: conj(&(&c.f - anticomm(&c.d, s) * 0.5)),
                g: conj(&c.g),
                vbh: conj(&(&c.vbh - &e * 0.5)),
                d_ring: conj(&c.d_ring),
                l: conj(&(s * &c.d + &c.l)),
            }
        })
        .collect();
    Ok(CouplingSet { subset: set.subset.clone(), slices, symmetry_defect: set.symmetry_defect, tail_estimate: set.tail_estimate })
}

/// `F'` and `V'BH` in the transformed basis: `A (F' - S) A^T` and `A V'BH A^T`.
pub fn transform_primed(f_primed: &DMatrix<f64>, vbh_primed: &DMatrix<f64>, a: &DMatrix<f64>, s: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (a * (f_primed - s) * a.transpose(), a * vbh_primed * a.transpose())
}
