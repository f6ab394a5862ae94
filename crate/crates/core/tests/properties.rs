use nalgebra::DMatrix;
use proptest::prelude::*;
use qwg_core::diabatic::lyapunov_residual;
use qwg_core::geometry::{frenet_frame_and_curve, uniform_grid};
use qwg_core::linalg::{anticomm, skew_defect, unitarity_defect};
use qwg_core::*;

fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n).prop_map(move |b| b.transpose() * &b + DMatrix::identity(n, n) * 0.2)
}

fn skew(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n).prop_map(|m| &m - m.transpose())
}

fn pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2usize..7).prop_flat_map(|n| (spd(n), skew(n)))
}

/// Smooth synthetic couplings on `ns` slices.
fn synthetic(n: usize, ns: usize, d: &DMatrix<f64>, f: &DMatrix<f64>) -> CouplingSet {
    let slices = (0..ns)
        .map(|i| {
            let u = i as f64 / (ns - 1) as f64;
            let s = 1.0 + 0.3 * u;
            let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
            CouplingSlice {
                u1: u,
                v: DMatrix::from_fn(n, n, |a, b| if a == b { 1.0 + a as f64 + u } else { 0.0 }),
                d: d * s,
                c: sym(f) * u,
                f: f * s,
                g: DMatrix::zeros(n, n),
                vbh: sym(&(f * f)) * -0.5,
                d_ring: d * 0.3,
                l: DMatrix::zeros(n, n),
            }
        })
        .collect();
    CouplingSet { subset: (0..n).collect(), slices, symmetry_defect: 0.0, tail_estimate: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_solves_the_anticommutator_equation((d, f) in pair()) {
        let s = solve_lyapunov(&d, &f).unwrap();
        prop_assert!(lyapunov_residual(&d, &f, &s) < 1e-11);
        prop_assert!(skew_defect(&s) < 1e-12);
    }

    #[test]
    fn ordered_product_stays_orthogonal(gens in prop::collection::vec(skew(3), 5..30)) {
        let u1: Vec<f64> = (0..gens.len()).map(|i| 0.05 * i as f64).collect();
        let (a, _) = path_ordered(&gens, &u1, &DMatrix::identity(3, 3)).unwrap();
        for m in &a {
            prop_assert!(unitarity_defect(m) < 1e-12);
        }
    }

    #[test]
    fn basis_changes_compose((d, f) in pair(), seed in 0u64..1000) {
        let n = d.nrows();
        let set = synthetic(n, 4, &d, &f);
        let orth = |k: u64| {
            let m = DMatrix::from_fn(n, n, |a, b| ((a * 7 + b * 3) as f64 + (seed + k) as f64 * 0.37).sin());
            m.qr().q()
        };
        let (a, b) = (orth(1), orth(2));
        let (sa, sb) = (&f * 0.3, (&f * &d - &d * &f) * 0.1 + &f * 0.2);
        let sb = (&sb - sb.transpose()) * 0.5;
        let zero = vec![DMatrix::zeros(n, n); 4];
        let once = gauge_transform(&set, &vec![a.clone(); 4], &vec![sa.clone(); 4], Some(&zero)).unwrap();
        let twice = gauge_transform(&once, &vec![b.clone(); 4], &vec![sb.clone(); 4], Some(&zero)).unwrap();
        let c = &b * &a;
        let sc = a.transpose() * &sb * &a + &sa;
        let direct = gauge_transform(&set, &vec![c; 4], &vec![sc; 4], Some(&zero)).unwrap();
        for (x, y) in twice.slices.iter().zip(&direct.slices) {
            prop_assert!((&x.f - &y.f).amax() < 1e-10);
            prop_assert!((&x.d - &y.d).amax() < 1e-10);
            prop_assert!((&x.l - &y.l).amax() < 1e-10);
        }
    }

    #[test]
    fn residual_coupling_vanishes_for_the_diabatic_generator((d, f) in pair()) {
        let s = solve_lyapunov(&d, &f).unwrap();
        let rest = &f - anticomm(&d, &s) * 0.5;
        prop_assert!(rest.amax() < 1e-12);
    }

    #[test]
    fn assembled_operators_are_symmetric((d, f) in pair(), ns in 5usize..40) {
        let n = d.nrows();
        let set = synthetic(n, ns, &d, &f);
        let tier = ApproximationTier::new(TierTag::SubsetBh, (0..n).collect()).unwrap();
        let h = assemble_effective(&set, &tier, None, None).unwrap();
        prop_assert!(h.assembled.symmetry_defect() < 1e-12);
        let primed = merge_kinetic(&set).unwrap();
        let tier = ApproximationTier::new(TierTag::SubsetBhMerged, (0..n).collect()).unwrap();
        let m = assemble_effective(&set, &tier, None, Some(&primed)).unwrap();
        prop_assert!(m.assembled.max_abs_diff(&h.assembled) < 1e-10);
    }

    #[test]
    fn frames_stay_orthonormal(kappa in 0.0f64..2.0, tau in -1.0f64..1.0, theta0 in -3.0f64..3.0) {
        let grid = uniform_grid(0.0, 5.0, 401);
        let f = frenet_frame_and_curve(&CurveSpec::helix(0.0, 5.0, kappa, tau), &grid, theta0, None).unwrap();
        for i in (0..grid.len()).step_by(40) {
            prop_assert!(f.orthonormality_defect(i) < 1e-9);
            prop_assert!((f.e2(i).cross(&f.e3(i)) - f.t[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn metric_factor_is_positive_inside_the_tube(kappa in -3.0f64..3.0, theta in -3.2f64..3.2, r in 0.0f64..1.0, phi in 0.0f64..6.3) {
        let rho = 0.99 * r / kappa.abs().max(1e-9);
        let p = qwg_core::geometry::NormalPlanePoint::polar(rho.min(1e3), phi);
        let w = metric_factor(kappa, theta, p);
        prop_assert!(w.d > 0.0 && w.d.is_finite());
    }

    #[test]
    fn scenarios_round_trip(slices in 5usize..400, seed in 0u64..1_000_000, states in 1usize..6) {
        let mut s = preset("avoided_crossing").unwrap();
        s.solver.slices = slices;
        s.solver.seed = seed;
        s.solver.states = states;
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash(), s.hash());
        prop_assert_eq!(back, s);
    }
}
