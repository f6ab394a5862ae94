use std::f64::consts::PI;

use qwg_core::geometry::{frenet_frame_and_curve, uniform_grid};
use qwg_core::{CurveSpec, Profile};

#[test]
fn circular_arc_has_radius_one_over_kappa() {
    let kappa = 0.5;
    let grid = uniform_grid(0.0, 2.0 * PI / kappa, 4001);
    let f = frenet_frame_and_curve(&CurveSpec::circular_arc(grid[0], grid[4000], kappa), &grid, 0.0, None).unwrap();
    let centre = f.a[0] + f.n[0] / kappa;
    for i in (0..grid.len()).step_by(100) {
        assert!(((f.a[i] - centre).norm() - 1.0 / kappa).abs() < 1e-6, "radius drift at {i}");
    }
    // a full turn closes the circle
    assert!((f.a[4000] - f.a[0]).norm() < 1e-6);
}

#[test]
fn helix_radius_and_pitch() {
    let (kappa, tau) = (0.6, 0.3);
    let w2 = kappa * kappa + tau * tau;
    let (radius, pitch) = (kappa / w2, 2.0 * PI * tau / w2);
    let turn = 2.0 * PI / w2.sqrt();
    let grid = uniform_grid(0.0, turn, 4001);
    let f = frenet_frame_and_curve(&CurveSpec::helix(0.0, turn, kappa, tau), &grid, 0.0, None).unwrap();
    // the Darboux vector is the helix axis
    let axis = (f.t[0] * tau + f.b[0] * kappa) / w2.sqrt();
    let base = f.a[0] + f.n[0] * radius;
    for i in (0..grid.len()).step_by(250) {
        let c = f.a[i] + f.n[i] * radius;
        assert!((c - base).cross(&axis).norm() < 1e-6, "centre leaves the axis at {i}");
        let r = f.a[i] - base;
        let radial = r - axis * r.dot(&axis);
        assert!((radial.norm() - radius).abs() < 1e-6);
    }
    assert!(((f.a[4000] - f.a[0]).dot(&axis) - pitch).abs() < 1e-6);
}

#[test]
fn tang_frame_is_orthonormal_and_does_not_rotate_about_the_tangent() {
    let grid = uniform_grid(0.0, 6.0, 2001);
    let h = grid[1] - grid[0];
    let curve = CurveSpec::bump(0.0, 6.0, Profile::Sine { offset: 0.4, amplitude: 0.2, frequency: 1.0, phase: 0.0 }, Profile::Constant(0.3));
    let f = frenet_frame_and_curve(&curve, &grid, 0.2, None).unwrap();
    let mut frenet_twist = 0.0f64;
    for i in 1..grid.len() - 1 {
        assert!(f.orthonormality_defect(i) < 1e-10);
        let (e2, e3) = (f.e2(i), f.e3(i));
        assert!(e2.dot(&e3).abs() < 1e-12 && e2.dot(&f.t[i]).abs() < 1e-10 && e3.dot(&f.t[i]).abs() < 1e-10);
        let de2 = (f.e2(i + 1) - f.e2(i - 1)) / (2.0 * h);
        assert!(de2.dot(&e3).abs() < 1e-5, "e2 rotates about t at {i}");
        let dn = (f.n[i + 1] - f.n[i - 1]) / (2.0 * h);
        frenet_twist = frenet_twist.max(dn.dot(&f.b[i]).abs());
    }
    // the Frenet normal does rotate, at the torsion rate
    assert!((frenet_twist - 0.3).abs() < 1e-4);
}

#[test]
fn embedded_points_keep_their_normal_plane_offsets() {
    let grid = uniform_grid(0.0, 3.0, 601);
    let f = frenet_frame_and_curve(&CurveSpec::helix(0.0, 3.0, 0.4, 0.2), &grid, 0.0, None).unwrap();
    for i in [0, 150, 600] {
        let p = f.embed(i, 0.3, -0.2);
        let d = p - f.a[i];
        assert!(d.dot(&f.t[i]).abs() < 1e-12);
        assert!((d.norm() - f64::hypot(0.3, 0.2)).abs() < 1e-12);
    }
}
