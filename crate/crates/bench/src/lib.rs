//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use qwg_core::geometry::{slice_geometry, uniform_grid};
use qwg_core::{compute_mode_bundle, BundleRequest, CrossSection, CurveSpec, ModeBundle, Scenario, SliceGeometry, SolveOptions, TransverseGrid};

/// A preset shrunk to `slices` slices and `points` transverse points per axis.
pub fn scaled_preset(name: &str, slices: usize, points: usize) -> Scenario {
    let mut s = qwg_core::preset(name).unwrap_or_else(|| panic!("unknown preset {name}"));
    s.solver.slices = slices;
    s.solver.transverse_points = [points, points];
    s
}

/// Harmonic modes along a circular arc, with the matching slice geometry.
pub fn arc_bundle(slices: usize, points: usize, modes: usize) -> (ModeBundle, Vec<SliceGeometry>, CrossSection) {
    let cs = CrossSection::harmonic(1.0);
    let u1 = uniform_grid(0.0, 2.0, slices);
    let geom = slice_geometry(&CurveSpec::circular_arc(0.0, 2.0, 0.2), &u1, 0.0).expect("arc geometry");
    let grid = TransverseGrid::new(points, points, 4.0, 4.0).expect("grid");
    let bundle = compute_mode_bundle(&BundleRequest { grid, cross_section: &cs, slices: &u1, modes, tube: None, solve: SolveOptions::default() }).expect("modes");
    (bundle, geom, cs)
}

/// Deterministic positive-definite metric and skew coupling of size `n`.
pub fn metric_and_coupling(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = DMatrix::from_fn(n, n, |i, j| ((i * 5 + j * 3) as f64 * 0.7).sin());
    let d = b.transpose() * &b + DMatrix::identity(n, n) * 0.5;
    let m = DMatrix::from_fn(n, n, |i, j| ((i * 2 + j * 7) as f64 * 0.3).cos());
    (d, &m - m.transpose())
}
