//! Reference curve, Frenet and Tang frames, and the metric weight of the
//! tubular coordinates.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvePreset {
    Straight,
    CircularArc,
    Clothoid,
    Helix,
    Bump,
    Tabulated,
}

impl CurvePreset {
    pub fn tag(self) -> &'static str {
        match self {
            CurvePreset::Straight => "straight",
            CurvePreset::CircularArc => "circular_arc",
            CurvePreset::Clothoid => "clothoid",
            CurvePreset::Helix => "helix",
            CurvePreset::Bump => "bump",
            CurvePreset::Tabulated => "tabulated",
        }
    }
}

/// Curvature, torsion and their derivatives at one arc-length position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurvePoint {
    pub kappa: f64,
    pub kappa_dot: f64,
    pub kappa_ddot: f64,
    pub tau: f64,
    pub tau_dot: f64,
}

/// An arc-length parametrized curve given by signed curvature and torsion.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub u1_min: f64,
    pub u1_max: f64,
    pub kappa: Profile,
    pub tau: Profile,
    pub preset: CurvePreset,
}

impl CurveSpec {
    pub fn straight(u1_min: f64, u1_max: f64) -> Self {
        Self { u1_min, u1_max, kappa: Profile::Constant(0.0), tau: Profile::Constant(0.0), preset: CurvePreset::Straight }
    }

    pub fn circular_arc(u1_min: f64, u1_max: f64, kappa: f64) -> Self {
        Self { u1_min, u1_max, kappa: Profile::Constant(kappa), tau: Profile::Constant(0.0), preset: CurvePreset::CircularArc }
    }

    pub fn clothoid(u1_min: f64, u1_max: f64, kappa0: f64, rate: f64) -> Self {
        Self {
            u1_min,
            u1_max,
            kappa: Profile::Linear { value: kappa0, slope: rate },
            tau: Profile::Constant(0.0),
            preset: CurvePreset::Clothoid,
        }
    }

    pub fn helix(u1_min: f64, u1_max: f64, kappa: f64, tau: f64) -> Self {
        Self { u1_min, u1_max, kappa: Profile::Constant(kappa), tau: Profile::Constant(tau), preset: CurvePreset::Helix }
    }

    pub fn bump(u1_min: f64, u1_max: f64, kappa: Profile, tau: Profile) -> Self {
        Self { u1_min, u1_max, kappa, tau, preset: CurvePreset::Bump }
    }

    /// Tabulated curvature and torsion, interpolated by natural cubic splines.
    /// Fails when the half-sampling error estimate exceeds `tol`.
    pub fn tabulated(u: Vec<f64>, kappa: Vec<f64>, tau: Vec<f64>, tol: f64) -> Result<Self> {
        let ks = crate::profile::CubicSpline::new(u.clone(), kappa)?;
        let ts = crate::profile::CubicSpline::new(u.clone(), tau)?;
        for (name, s) in [("curve.kappa", &ks), ("curve.tau", &ts)] {
            let err = s.half_sampling_error();
            if err > tol {
                return Err(Error::config(name, format!("sampling too coarse: interpolation error estimate {err:e} exceeds {tol:e}")));
            }
        }
        let (lo, hi) = ks.domain();
        Ok(Self { u1_min: lo, u1_max: hi, kappa: Profile::Tabulated(ks), tau: Profile::Tabulated(ts), preset: CurvePreset::Tabulated })
    }

    pub fn length(&self) -> f64 {
        self.u1_max - self.u1_min
    }

    pub fn at(&self, u1: f64) -> CurvePoint {
        let k = self.kappa.jet(u1);
        let t = self.tau.jet(u1);
        CurvePoint { kappa: k.v, kappa_dot: k.d1, kappa_ddot: k.d2, tau: t.v, tau_dot: t.d1 }
    }

    /// Like [`CurveSpec::at`] but rejects non-finite data.
    pub fn checked_at(&self, u1: f64) -> Result<CurvePoint> {
        let p = self.at(u1);
        if !p.tau.is_finite() {
            return Err(Error::NonFiniteTau { u1 });
        }
        if !p.kappa.is_finite() || !p.kappa_dot.is_finite() || !p.kappa_ddot.is_finite() {
            return Err(Error::NonFiniteCurve { u1, what: "curvature" });
        }
        if !p.tau_dot.is_finite() {
            return Err(Error::NonFiniteCurve { u1, what: "torsion derivative" });
        }
        Ok(p)
    }

    pub fn is_straight(&self) -> bool {
        self.kappa.is_zero()
    }

    pub fn is_planar(&self) -> bool {
        self.tau.is_zero()
    }

    pub fn validate_grid(&self, grid: &[f64]) -> Result<()> {
        if grid.len() < 2 {
            return Err(Error::InvalidGrid("need at least two samples".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("samples not strictly increasing".into()));
        }
        let tol = 1e-12 * (1.0 + self.length().abs());
        if grid[0] < self.u1_min - tol || *grid.last().unwrap() > self.u1_max + tol {
            return Err(Error::InvalidGrid(format!("samples leave [{}, {}]", self.u1_min, self.u1_max)));
        }
        Ok(())
    }
}

/// Uniform arc-length grid including both end points.
pub fn uniform_grid(u1_min: f64, u1_max: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    let h = (u1_max - u1_min) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { u1_max } else { u1_min + i as f64 * h }).collect()
}

const SUBSTEPS: usize = 8;

/// Integrates the Tang condition `theta' = -tau` with classical RK4.
pub fn integrate_tang_angle(curve: &CurveSpec, grid: &[f64], theta0: f64) -> Result<Vec<f64>> {
    curve.validate_grid(grid)?;
    let tau = |u: f64| -> Result<f64> {
        let t = curve.tau.value(u);
        if t.is_finite() {
            Ok(t)
        } else {
            Err(Error::NonFiniteTau { u1: u })
        }
    };
    let mut theta = Vec::with_capacity(grid.len());
    theta.push(theta0);
    let mut th = theta0;
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / SUBSTEPS as f64;
        for s in 0..SUBSTEPS {
            let u = w[0] + s as f64 * h;
            let k1 = -tau(u)?;
            let k2 = -tau(u + 0.5 * h)?;
            let k4 = -tau(u + h)?;
            th += h / 6.0 * (k1 + 4.0 * k2 + k4);
        }
        theta.push(th);
    }
    Ok(theta)
}

/// Frenet tripod, Tang angle and reconstructed curve on a grid.
#[derive(Debug, Clone)]
pub struct TangFrame {
    pub u1: Vec<f64>,
    pub theta: Vec<f64>,
    pub t: Vec<Vector3<f64>>,
    pub n: Vec<Vector3<f64>>,
    pub b: Vec<Vector3<f64>>,
    pub a: Vec<Vector3<f64>>,
}

impl TangFrame {
    /// Tang basis vector `e2 = cos(theta) n + sin(theta) b`.
    pub fn e2(&self, i: usize) -> Vector3<f64> {
        let (s, c) = self.theta[i].sin_cos();
        self.n[i] * c + self.b[i] * s
    }

    /// Tang basis vector `e3 = -sin(theta) n + cos(theta) b`.
    pub fn e3(&self, i: usize) -> Vector3<f64> {
        let (s, c) = self.theta[i].sin_cos();
        -self.n[i] * s + self.b[i] * c
    }

    /// Ambient position of the tube point `(u1_i, u2, u3)`.
    pub fn embed(&self, i: usize, u2: f64, u3: f64) -> Vector3<f64> {
        self.a[i] + self.e2(i) * u2 + self.e3(i) * u3
    }

    /// Largest deviation from orthonormality of the tripod at sample `i`.
    pub fn orthonormality_defect(&self, i: usize) -> f64 {
        let (t, n, b) = (self.t[i], self.n[i], self.b[i]);
        [t.norm() - 1.0, n.norm() - 1.0, b.norm() - 1.0, t.dot(&n), t.dot(&b), n.dot(&b)]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
struct FrameState {
    a: Vector3<f64>,
    t: Vector3<f64>,
    n: Vector3<f64>,
    b: Vector3<f64>,
}

impl FrameState {
    fn deriv(&self, kappa: f64, tau: f64) -> FrameState {
        FrameState { a: self.t, t: self.n * kappa, n: -self.t * kappa + self.b * tau, b: -self.n * tau }
    }

    fn add(&self, k: &FrameState, h: f64) -> FrameState {
        FrameState { a: self.a + k.a * h, t: self.t + k.t * h, n: self.n + k.n * h, b: self.b + k.b * h }
    }

    fn reorthonormalize(&mut self) {
        self.t = self.t.normalize();
        self.n = (self.n - self.t * self.t.dot(&self.n)).normalize();
        self.b = self.t.cross(&self.n);
    }
}

/// Integrates the Frenet-Serret system together with `a' = t` using RK4 at
/// one eighth of the grid spacing, re-orthonormalizing after every step.
/// The initial tripod defaults to the canonical basis at the origin.
pub fn frenet_frame_and_curve(
    curve: &CurveSpec,
    grid: &[f64],
    theta0: f64,
    initial: Option<[Vector3<f64>; 3]>,
) -> Result<TangFrame> {
    let theta = integrate_tang_angle(curve, grid, theta0)?;
    let [t0, n0, b0] = initial.unwrap_or([Vector3::x(), Vector3::y(), Vector3::z()]);
    let mut st = FrameState { a: Vector3::zeros(), t: t0, n: n0, b: b0 };
    let init_defect = [t0.norm() - 1.0, n0.norm() - 1.0, b0.norm() - 1.0, t0.dot(&n0), t0.dot(&b0), n0.dot(&b0)]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if init_defect > 1e-10 {
        return Err(Error::FrameDrift { u1: grid[0], defect: init_defect });
    }
    let kt = |u: f64| -> Result<(f64, f64)> {
        let p = curve.checked_at(u)?;
        Ok((p.kappa, p.tau))
    };
    let mut out = TangFrame { u1: grid.to_vec(), theta, t: vec![st.t], n: vec![st.n], b: vec![st.b], a: vec![st.a] };
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / SUBSTEPS as f64;
        for s in 0..SUBSTEPS {
            let u = w[0] + s as f64 * h;
            let (k0, t0) = kt(u)?;
            let (km, tm) = kt(u + 0.5 * h)?;
            let (k1, t1) = kt(u + h)?;
            let d1 = st.deriv(k0, t0);
            let d2 = st.add(&d1, 0.5 * h).deriv(km, tm);
            let d3 = st.add(&d2, 0.5 * h).deriv(km, tm);
            let d4 = st.add(&d3, h).deriv(k1, t1);
            st = FrameState {
                a: st.a + (d1.a + d2.a * 2.0 + d3.a * 2.0 + d4.a) * (h / 6.0),
                t: st.t + (d1.t + d2.t * 2.0 + d3.t * 2.0 + d4.t) * (h / 6.0),
                n: st.n + (d1.n + d2.n * 2.0 + d3.n * 2.0 + d4.n) * (h / 6.0),
                b: st.b + (d1.b + d2.b * 2.0 + d3.b * 2.0 + d4.b) * (h / 6.0),
            };
            st.reorthonormalize();
        }
        out.t.push(st.t);
        out.n.push(st.n);
        out.b.push(st.b);
        out.a.push(st.a);
        let i = out.t.len() - 1;
        let defect = out.orthonormality_defect(i);
        if defect > 1e-8 {
            return Err(Error::FrameDrift { u1: w[1], defect });
        }
    }
    Ok(out)
}

/// A point of the normal plane in Tang coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPlanePoint {
    pub u2: f64,
    pub u3: f64,
    pub rho: f64,
    pub vartheta: f64,
}

impl NormalPlanePoint {
    pub fn cartesian(u2: f64, u3: f64) -> Self {
        Self { u2, u3, rho: u2.hypot(u3), vartheta: u3.atan2(u2) }
    }

    pub fn polar(rho: f64, vartheta: f64) -> Self {
        let (s, c) = vartheta.sin_cos();
        Self { u2: rho * c, u3: rho * s, rho, vartheta }
    }
}

/// Projections onto the Frenet normal and binormal plus the metric weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub d: f64,
    pub nhat: f64,
    pub bhat: f64,
    pub valid: bool,
}

/// `nhat = u2 cos(theta) - u3 sin(theta)`, `bhat = u2 sin(theta) + u3 cos(theta)`.
pub fn projections(theta: f64, u2: f64, u3: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (u2 * c - u3 * s, u2 * s + u3 * c)
}

/// Metric weight `D = (1 - kappa nhat)^-2`; `valid` is false where the
/// tubular coordinates fold over (`1 - kappa nhat <= 0`).
pub fn metric_factor(kappa: f64, theta: f64, p: NormalPlanePoint) -> MetricSample {
    let (nhat, bhat) = projections(theta, p.u2, p.u3);
    let s = 1.0 - kappa * nhat;
    let valid = s > 0.0;
    MetricSample { d: if valid { 1.0 / (s * s) } else { f64::NAN }, nhat, bhat, valid }
}

/// Curve data and Tang angle at one slice of the guide.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SliceGeometry {
    pub u1: f64,
    pub curve: CurvePoint,
    pub theta: f64,
}

/// Pointwise weights entering the projected equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointWeights {
    pub nhat: f64,
    pub bhat: f64,
    /// `(1 - kappa nhat)^-2`.
    pub d: f64,
    /// `dD/du1 = 2 (kappa' nhat + kappa tau bhat) / (1 - kappa nhat)^3`.
    pub d_dot: f64,
    /// Scalar curvature term whose matrix elements form `C`.
    pub c: f64,
}

impl SliceGeometry {
    /// Weights at `(u2, u3)`, or `None` where the tube folds over.
    pub fn weights(&self, u2: f64, u3: f64) -> Option<PointWeights> {
        let CurvePoint { kappa, kappa_dot, kappa_ddot, tau, tau_dot } = self.curve;
        let (nhat, bhat) = projections(self.theta, u2, u3);
        let s = 1.0 - kappa * nhat;
        if s <= 0.0 {
            return None;
        }
        let q = kappa_dot * nhat + kappa * tau * bhat;
        let p = (kappa_ddot - kappa * tau * tau) * nhat + (2.0 * kappa_dot * tau + kappa * tau_dot) * bhat;
        let d = 1.0 / (s * s);
        let c = 0.25 * kappa * kappa * d + 0.5 * p / (s * s * s) + 1.25 * q * q / (s * s * s * s);
        Some(PointWeights { nhat, bhat, d, d_dot: 2.0 * q / (s * s * s), c })
    }
}

/// Curve data and Tang angle on every slice, with `theta(grid[0]) = theta0`.
pub fn slice_geometry(curve: &CurveSpec, grid: &[f64], theta0: f64) -> Result<Vec<SliceGeometry>> {
    let theta = integrate_tang_angle(curve, grid, theta0)?;
    grid.iter().zip(theta).map(|(&u1, theta)| Ok(SliceGeometry { u1, curve: curve.checked_at(u1)?, theta })).collect()
}
