use nalgebra::SymmetricEigen;
use qwg_core::transverse::{build_transverse_hamiltonian, solve_transverse_modes};
use qwg_core::{CrossSection, Family, Profile, SolveOptions, TransverseGrid};

fn dense_lowest(cs: &CrossSection, grid: &TransverseGrid, k: usize) -> Vec<f64> {
    let op = build_transverse_hamiltonian(grid, cs, 0.0, None).unwrap();
    let mut e: Vec<f64> = SymmetricEigen::new(op.matrix.to_dense()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e.truncate(k);
    e
}

#[test]
fn symmetric_double_well_splitting_matches_dense_diagonalization() {
    let c = Profile::Constant;
    let cs = CrossSection::new(Family::DoubleWell { barrier: c(3.0), separation: c(1.3), omega3: c(2.0), tilt: c(0.0) });
    let grid = TransverseGrid::new(40, 12, 3.5, 2.0).unwrap();
    let op = build_transverse_hamiltonian(&grid, &cs, 0.0, None).unwrap();
    let modes = solve_transverse_modes(&op, 3, &SolveOptions { tol: 1e-11, ..Default::default() }, None).unwrap();
    let dense = dense_lowest(&cs, &grid, 3);
    for (a, b) in modes.energies.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    let split = dense[1] - dense[0];
    assert!(split > 0.0 && split < 0.3 * (dense[2] - dense[1]), "tunnel splitting {split}");
    // the two lowest modes are even and odd in u2
    let g = grid;
    let mirror = |f: &[f64], i: usize, j: usize| f[g.index(g.nx - 1 - i, j)];
    let (i, j) = (8, 6);
    let (p0, p1) = (&modes.modes[0], &modes.modes[1]);
    assert!((p0[g.index(i, j)] - mirror(p0, i, j)).abs() < 1e-6);
    assert!((p1[g.index(i, j)] + mirror(p1, i, j)).abs() < 1e-6);
}

#[test]
fn tabulated_profile_reproduces_the_analytic_oscillator() {
    let omega = 1.3;
    let axis: Vec<f64> = (0..41).map(|k| -5.0 + 0.25 * k as f64).collect();
    let values = axis.iter().map(|x| axis.iter().map(|y| 0.5 * omega * omega * (x * x + y * y)).collect()).collect();
    let tab = CrossSection::new(Family::Tabulated { u2: axis.clone(), u3: axis, values });
    let grid = TransverseGrid::new(36, 36, 4.5, 4.5).unwrap();
    let a = dense_lowest(&CrossSection::harmonic(omega), &grid, 3);
    let b = dense_lowest(&tab, &grid, 3);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn hard_wall_points_are_eliminated() {
    let c = Profile::Constant;
    let cs = CrossSection::new(Family::DirichletBox { half_width2: c(1.0), half_width3: c(0.5) });
    let grid = TransverseGrid::new(30, 30, 1.5, 1.5).unwrap();
    let op = build_transverse_hamiltonian(&grid, &cs, 0.0, None).unwrap();
    assert!(op.active.len() < grid.len());
    let modes = solve_transverse_modes(&op, 1, &SolveOptions::default(), None).unwrap();
    for k in 0..grid.len() {
        let (x, y) = grid.point(k);
        if x.abs() > 1.0 || y.abs() > 0.5 {
            assert_eq!(modes.modes[0][k], 0.0);
        }
    }
    // separable discrete value: (1 - cos(pi / (m + 1))) / h^2 per axis with m active points
    let axis = |m: usize, h: f64| (1.0 - (std::f64::consts::PI / (m + 1) as f64).cos()) / (h * h);
    let mx = (0..grid.nx).filter(|&i| grid.x(i).abs() <= 1.0).count();
    let my = (0..grid.ny).filter(|&j| grid.y(j).abs() <= 0.5).count();
    assert_eq!(op.active.len(), mx * my);
    let exact = axis(mx, grid.hx()) + axis(my, grid.hy());
    assert!((modes.energies[0] - exact).abs() < 1e-8, "{} vs {exact}", modes.energies[0]);
}
