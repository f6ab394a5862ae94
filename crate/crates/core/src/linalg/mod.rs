//! Linear algebra building blocks: sparse storage, a fast Dirichlet
//! preconditioner, an iterative eigensolver and small dense helpers.

pub mod banded;
pub mod davidson;
pub mod dst;
pub mod sparse;

use nalgebra::{ComplexField, DMatrix};

pub use banded::BandCholesky;
pub use davidson::{lowest_eigenpairs, DavidsonOptions, EigenPairs, Identity, Preconditioner};
pub use dst::{Axis, DirichletPreconditioner};
pub use sparse::{CsrMatrix, SymOperator, TripletBuilder};

pub fn anticomm<T: ComplexField>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a * b + b * a
}

pub fn comm<T: ComplexField>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a * b - b * a
}

/// Largest entry modulus.
pub fn max_abs<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|v| v.clone().modulus()).fold(0.0, f64::max)
}

/// Nearest unitary matrix (polar factor) and the size of the correction.
pub fn polar_unitary<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> (DMatrix<T>, f64) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let q = u * vt;
    let corr = max_abs(&(&q - m));
    (q, corr)
}

/// `max |M M^dagger - 1|`.
pub fn unitarity_defect<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    let n = m.nrows();
    max_abs(&(m * m.adjoint() - DMatrix::<T>::identity(n, n)))
}

/// Hermitian and anti-Hermitian defects: `max |M - M^dagger|` and `max |M + M^dagger|`.
pub fn hermiticity_defect<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn skew_defect<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    max_abs(&(m + m.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_of_scaled_rotation_is_rotation() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let m = DMatrix::from_row_slice(2, 2, &[1.01 * c, -s, s, 0.99 * c]);
        let (q, corr) = polar_unitary(&m);
        assert!(unitarity_defect(&q) < 1e-14);
        assert!(corr > 0.0 && corr < 0.02);
    }
}
