//! Smooth scalar functions of arc length used for curvature, torsion and
//! cross-section parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function of `u1` with analytic first and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileSpec", into = "ProfileSpec")]
pub enum Profile {
    Constant(f64),
    Linear { value: f64, slope: f64 },
    Sine { offset: f64, amplitude: f64, frequency: f64, phase: f64 },
    Gaussian { offset: f64, amplitude: f64, center: f64, width: f64 },
    /// Smooth top hat: `amplitude * (tanh((u-start)/w) - tanh((u-end)/w)) / 2`.
    Window { offset: f64, amplitude: f64, start: f64, end: f64, smoothness: f64 },
    /// Smooth step from `from` to `to` centred at `center`.
    Step { from: f64, to: f64, center: f64, width: f64 },
    Polynomial(Vec<f64>),
    Tabulated(CubicSpline),
}

/// Value and first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

fn tanh_jet(x: f64, w: f64) -> Jet {
    let t = (x / w).tanh();
    let s = 1.0 - t * t;
    Jet { v: t, d1: s / w, d2: -2.0 * t * s / (w * w) }
}

impl Profile {
    pub fn constant(v: f64) -> Self {
        Profile::Constant(v)
    }

    pub fn jet(&self, u: f64) -> Jet {
        match self {
            Profile::Constant(c) => Jet { v: *c, d1: 0.0, d2: 0.0 },
            Profile::Linear { value, slope } => Jet { v: value + slope * u, d1: *slope, d2: 0.0 },
            Profile::Sine { offset, amplitude, frequency, phase } => {
                let arg = frequency * u + phase;
                Jet {
                    v: offset + amplitude * arg.sin(),
                    d1: amplitude * frequency * arg.cos(),
                    d2: -amplitude * frequency * frequency * arg.sin(),
                }
            }
            Profile::Gaussian { offset, amplitude, center, width } => {
                let x = (u - center) / width;
                let g = amplitude * (-0.5 * x * x).exp();
                Jet { v: offset + g, d1: -x / width * g, d2: (x * x - 1.0) / (width * width) * g }
            }
            Profile::Window { offset, amplitude, start, end, smoothness } => {
                let a = tanh_jet(u - start, *smoothness);
                let b = tanh_jet(u - end, *smoothness);
                let h = 0.5 * amplitude;
                Jet { v: offset + h * (a.v - b.v), d1: h * (a.d1 - b.d1), d2: h * (a.d2 - b.d2) }
            }
            Profile::Step { from, to, center, width } => {
                let t = tanh_jet(u - center, *width);
                let h = 0.5 * (to - from);
                Jet { v: from + h * (1.0 + t.v), d1: h * t.d1, d2: h * t.d2 }
            }
            Profile::Polynomial(c) => {
                let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for a in c.iter().rev() {
                    d2 = d2 * u + d1;
                    d1 = d1 * u + v;
                    v = v * u + a;
                }
                Jet { v, d1, d2: 2.0 * d2 }
            }
            Profile::Tabulated(s) => s.jet(u),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.jet(u).v
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile::Constant(_) => true,
            Profile::Linear { slope, .. } => *slope == 0.0,
            Profile::Sine { amplitude, frequency, .. } => *amplitude == 0.0 || *frequency == 0.0,
            Profile::Gaussian { amplitude, .. } | Profile::Window { amplitude, .. } => *amplitude == 0.0,
            Profile::Step { from, to, .. } => from == to,
            Profile::Polynomial(c) => c.iter().skip(1).all(|a| *a == 0.0),
            Profile::Tabulated(_) => false,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.value(0.0) == 0.0
    }
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Constant(0.0)
    }
}

/// Natural cubic spline through tabulated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::config("tabulated", "need at least 3 samples and equal-length u / values arrays"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("tabulated.u", "sample positions must be strictly increasing"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::config("tabulated", "samples must be finite"));
        }
        // tridiagonal system for the second derivatives, natural ends
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0 / 6.0;
            let b = (h0 + h1) / 3.0;
            let cc = h1 / 6.0;
            let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
            let denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Ok(Self { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn jet(&self, u: f64) -> Jet {
        let n = self.x.len();
        let i = match self.x.partition_point(|&xi| xi <= u) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - u) / h;
        let b = (u - self.x[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let d2 = a * m0 + b * m1;
        Jet { v, d1, d2 }
    }

    /// Interpolation error estimate from re-fitting every other sample and
    /// comparing at the dropped points (scaled for fourth-order convergence).
    pub fn half_sampling_error(&self) -> f64 {
        let n = self.x.len();
        if n < 5 {
            return f64::INFINITY;
        }
        let xs: Vec<f64> = self.x.iter().step_by(2).copied().collect();
        let ys: Vec<f64> = self.y.iter().step_by(2).copied().collect();
        let coarse = match CubicSpline::new(xs, ys) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let (lo, hi) = coarse.domain();
        let mut worst = 0.0f64;
        for i in (1..n).step_by(2) {
            if self.x[i] > lo && self.x[i] < hi {
                worst = worst.max((coarse.jet(self.x[i]).v - self.y[i]).abs());
            }
        }
        worst / 15.0
    }
}

/// Serialized form: either a bare number or a table with a `kind` key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Number(f64),
    Table(ProfileTable),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileTable {
    Constant {
        value: f64,
    },
    Linear {
        value: f64,
        slope: f64,
    },
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Gaussian {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    Window {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        start: f64,
        end: f64,
        smoothness: f64,
    },
    Step {
        from: f64,
        to: f64,
        center: f64,
        width: f64,
    },
    Polynomial {
        coefficients: Vec<f64>,
    },
    Tabulated {
        u: Vec<f64>,
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ProfileSpec> for Profile {
    type Error = Error;

    fn try_from(spec: ProfileSpec) -> Result<Self> {
        let bad = |what: &str| Error::config("profile", what.to_string());
        Ok(match spec {
            ProfileSpec::Number(v) => Profile::Constant(v),
            ProfileSpec::Table(t) => match t {
                ProfileTable::Constant { value } => Profile::Constant(value),
                ProfileTable::Linear { value, slope } => Profile::Linear { value, slope },
                ProfileTable::Sine { offset, amplitude, frequency, phase } => Profile::Sine { offset, amplitude, frequency, phase },
                ProfileTable::Gaussian { offset, amplitude, center, width } => {
                    if width <= 0.0 {
                        return Err(bad("gaussian width must be positive"));
                    }
                    Profile::Gaussian { offset, amplitude, center, width }
                }
                ProfileTable::Window { offset, amplitude, start, end, smoothness } => {
                    if smoothness <= 0.0 || end <= start {
                        return Err(bad("window needs start < end and positive smoothness"));
                    }
                    Profile::Window { offset, amplitude, start, end, smoothness }
                }
                ProfileTable::Step { from, to, center, width } => {
                    if width <= 0.0 {
                        return Err(bad("step width must be positive"));
                    }
                    Profile::Step { from, to, center, width }
                }
                ProfileTable::Polynomial { coefficients } => Profile::Polynomial(coefficients),
                ProfileTable::Tabulated { u, values } => Profile::Tabulated(CubicSpline::new(u, values)?),
            },
        })
    }
}

impl From<Profile> for ProfileSpec {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Constant(v) => ProfileSpec::Number(v),
            Profile::Linear { value, slope } => ProfileSpec::Table(ProfileTable::Linear { value, slope }),
            Profile::Sine { offset, amplitude, frequency, phase } => ProfileSpec::Table(ProfileTable::Sine { offset, amplitude, frequency, phase }),
            Profile::Gaussian { offset, amplitude, center, width } => ProfileSpec::Table(ProfileTable::Gaussian { offset, amplitude, center, width }),
            Profile::Window { offset, amplitude, start, end, smoothness } => {
                ProfileSpec::Table(ProfileTable::Window { offset, amplitude, start, end, smoothness })
            }
            Profile::Step { from, to, center, width } => ProfileSpec::Table(ProfileTable::Step { from, to, center, width }),
            Profile::Polynomial(coefficients) => ProfileSpec::Table(ProfileTable::Polynomial { coefficients }),
            Profile::Tabulated(s) => ProfileSpec::Table(ProfileTable::Tabulated { u: s.x, values: s.y }),
        }
    }
}
