//! Scenario configuration: curve, cross-section, mode selection, solver
//! settings and output options, plus the built-in presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::effective::TierTag;
use crate::geometry::{CurvePreset, CurveSpec};
use crate::profile::Profile;
use crate::reference3d::POINT_CAP;
use crate::transverse::{CrossSection, Family, TransverseGrid, MODE_CAP};

/// Tag of the brute-force 3D oracle in tier lists.
pub const REFERENCE_TAG: &str = "reference3d";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSamples {
    pub u: Vec<f64>,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
    #[serde(default = "default_sample_tol")]
    pub tolerance: f64,
}

fn default_sample_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub preset: CurvePreset,
    #[serde(default)]
    pub u1_min: f64,
    #[serde(default)]
    pub u1_max: Option<f64>,
    #[serde(default)]
    pub kappa: Profile,
    #[serde(default)]
    pub tau: Profile,
    /// Curvature growth rate of a clothoid.
    #[serde(default)]
    pub rate: f64,
    /// Tang angle at `u1_min`.
    #[serde(default)]
    pub theta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<CurveSamples>,
}

impl CurveConfig {
    pub fn build(&self) -> Result<CurveSpec> {
        if let Some(s) = &self.samples {
            if self.preset != CurvePreset::Tabulated {
                return Err(Error::config("curve.samples", "samples are only read for the tabulated preset"));
            }
            return CurveSpec::tabulated(s.u.clone(), s.kappa.clone(), s.tau.clone(), s.tolerance);
        }
        let hi = self.u1_max.ok_or_else(|| Error::config("curve.u1_max", "missing"))?;
        if !(hi > self.u1_min) {
            return Err(Error::config("curve.u1_max", format!("must exceed u1_min = {}", self.u1_min)));
        }
        let constant = |p: &Profile, key: &str| -> Result<f64> {
            if p.is_constant() {
                Ok(p.value(0.0))
            } else {
                Err(Error::config(format!("curve.{key}"), format!("{} needs a constant value", self.preset.tag())))
            }
        };
        let lo = self.u1_min;
        Ok(match self.preset {
            CurvePreset::Straight => CurveSpec::straight(lo, hi),
            CurvePreset::CircularArc => CurveSpec::circular_arc(lo, hi, constant(&self.kappa, "kappa")?),
            CurvePreset::Clothoid => CurveSpec::clothoid(lo, hi, constant(&self.kappa, "kappa")?, self.rate),
            CurvePreset::Helix => CurveSpec::helix(lo, hi, constant(&self.kappa, "kappa")?, constant(&self.tau, "tau")?),
            CurvePreset::Bump => CurveSpec::bump(lo, hi, self.kappa.clone(), self.tau.clone()),
            CurvePreset::Tabulated => return Err(Error::config("curve.samples", "tabulated preset needs samples")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    /// Number of transverse modes computed per slice.
    pub total: usize,
    /// One-based indices of the coupled subset.
    pub subset: Vec<usize>,
}

impl ModesConfig {
    /// Zero-based subset.
    pub fn subset0(&self) -> Vec<usize> {
        self.subset.iter().map(|m| m - 1).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Slices along the guide, including both Dirichlet ends.
    pub slices: usize,
    pub transverse_points: [usize; 2],
    /// Half-widths of the transverse box.
    pub transverse_extent: [f64; 2],
    #[serde(default = "default_states")]
    pub states: usize,
    /// Residual bound of the longitudinal eigensolver.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Residual bound of the transverse eigensolver.
    #[serde(default = "default_tol")]
    pub mode_tolerance: f64,
    pub tiers: Vec<String>,
    /// `[n1, n2, n3]` points of the 3D oracle; defaults to the slice count
    /// and transverse grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_points: Option<[usize; 3]>,
    #[serde(default)]
    pub diabatic: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_states() -> usize {
    4
}

fn default_tol() -> f64 {
    1e-9
}

fn default_seed() -> u64 {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default = "default_verbosity")]
    pub verbosity: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_dir(), formats: default_formats(), verbosity: default_verbosity() }
    }
}

fn default_dir() -> String {
    "results".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

fn default_verbosity() -> String {
    "info".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub curve: CurveConfig,
    pub cross_section: CrossSection,
    pub modes: ModesConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "scenario".into()
}

/// A requested solver stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierRequest {
    Effective(TierTag),
    Reference,
}

impl TierRequest {
    pub fn parse(s: &str) -> Result<Self> {
        if s == REFERENCE_TAG {
            Ok(TierRequest::Reference)
        } else {
            TierTag::parse(s).map(TierRequest::Effective)
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            TierRequest::Effective(t) => t.tag(),
            TierRequest::Reference => REFERENCE_TAG,
        }
    }
}

impl Scenario {
    /// Parses TOML text. A top-level `preset = "<name>"` key loads that
    /// preset and overlays the remaining keys on it.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let merged = match value.remove("preset") {
            Some(toml::Value::String(name)) => {
                let base = preset(&name).ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))?;
                let mut base = toml::Table::try_from(&base).map_err(|e| Error::Parse(e.to_string()))?;
                overlay(&mut base, value);
                base
            }
            Some(_) => return Err(Error::config("preset", "must be a string")),
            None => value,
        };
        let s: Scenario = merged.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialized form, without the output
    /// section so relocated runs share a hash.
    pub fn hash(&self) -> String {
        let physics = Scenario { output: OutputConfig::default(), ..self.clone() };
        let canonical = serde_json::to_string(&physics).expect("scenario serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tiers(&self) -> Result<Vec<TierRequest>> {
        self.solver.tiers.iter().map(|t| TierRequest::parse(t)).collect()
    }

    pub fn transverse_grid(&self) -> Result<TransverseGrid> {
        let [nx, ny] = self.solver.transverse_points;
        let [lx, ly] = self.solver.transverse_extent;
        TransverseGrid::new(nx, ny, lx, ly)
    }

    pub fn reference_points(&self) -> [usize; 3] {
        let [nx, ny] = self.solver.transverse_points;
        self.solver.reference_points.unwrap_or([self.solver.slices.saturating_sub(2), nx, ny])
    }

    pub fn validate(&self) -> Result<()> {
        let curve = self.curve.build()?;
        self.cross_section.validate(curve.u1_min, curve.u1_max)?;
        let m = &self.modes;
        if m.total == 0 || m.total > MODE_CAP {
            return Err(Error::config("modes.total", format!("must lie in 1..={MODE_CAP}")));
        }
        if m.subset.is_empty() {
            return Err(Error::config("modes.subset", "must not be empty"));
        }
        if let Some(bad) = m.subset.iter().find(|&&k| k == 0 || k > m.total) {
            return Err(Error::config("modes.subset", format!("index {bad} outside 1..={}", m.total)));
        }
        let mut sorted = m.subset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != m.subset.len() {
            return Err(Error::config("modes.subset", "repeated index"));
        }
        let s = &self.solver;
        if s.slices < 5 {
            return Err(Error::config("solver.slices", "need at least 5 slices"));
        }
        self.transverse_grid()?;
        if s.states == 0 {
            return Err(Error::config("solver.states", "must be positive"));
        }
        for (key, v) in [("solver.tolerance", s.tolerance), ("solver.mode_tolerance", s.mode_tolerance)] {
            if !(v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if s.tiers.is_empty() {
            return Err(Error::config("solver.tiers", "at least one tier is required"));
        }
        let tiers = self.tiers()?;
        if tiers.contains(&TierRequest::Reference) {
            let [n1, n2, n3] = self.reference_points();
            if n1 < 3 || n2 < 3 || n3 < 3 {
                return Err(Error::config("solver.reference_points", "need at least 3 points per axis"));
            }
            if n1 * n2 * n3 > POINT_CAP {
                return Err(Error::MemoryCap { points: n1 * n2 * n3, cap: POINT_CAP });
            }
        }
        if s.diabatic && m.subset.len() < 2 {
            return Err(Error::config("solver.diabatic", "needs a subset of at least two modes"));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(Error::config("output.formats", format!("unknown format `{f}`")));
            }
        }
        if !["error", "warn", "info", "debug", "trace"].contains(&self.output.verbosity.as_str()) {
            return Err(Error::config("output.verbosity", format!("unknown level `{}`", self.output.verbosity)));
        }
        Ok(())
    }
}

/// Recursively replaces entries of `base` with those of `top`.
fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Names and one-line descriptions of the built-in presets.
pub const PRESETS: [(&str, &str); 7] = [
    ("straight_harmonic", "straight guide of length pi, isotropic harmonic cross-section with omega = 1"),
    ("bent_arc_thin", "circular arc (kappa = 0.5) around a thin harmonic guide, compared with the 3D oracle"),
    ("twisted_anisotropic", "straight anisotropic harmonic guide twisted at a constant rate"),
    ("shifted_harmonic", "harmonic guide whose centre follows d(u1) = (sin u1, 0)"),
    ("avoided_crossing", "tilted double well whose two lowest modes pass an avoided crossing"),
    ("arc_with_tails", "localized bend between straight tails; hosts a curvature-induced bound state"),
    ("varying_harmonic", "straight guide whose frequency grows linearly along the arc length"),
];

fn base(name: &str, curve: CurveConfig, cross_section: CrossSection, total: usize, subset: Vec<usize>, solver: SolverConfig) -> Scenario {
    Scenario { name: name.into(), curve, cross_section, modes: ModesConfig { total, subset }, solver, output: OutputConfig::default() }
}

fn curve(preset: CurvePreset, u1_max: f64, kappa: Profile) -> CurveConfig {
    CurveConfig { preset, u1_min: 0.0, u1_max: Some(u1_max), kappa, tau: Profile::Constant(0.0), rate: 0.0, theta0: 0.0, samples: None }
}

fn solver(slices: usize, points: usize, extent: f64, tiers: &[&str]) -> SolverConfig {
    SolverConfig {
        slices,
        transverse_points: [points, points],
        transverse_extent: [extent, extent],
        states: 4,
        tolerance: 1e-9,
        mode_tolerance: 1e-9,
        tiers: tiers.iter().map(|s| s.to_string()).collect(),
        reference_points: None,
        diabatic: false,
        seed: 11,
    }
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Option<Scenario> {
    use std::f64::consts::PI;
    let c = Profile::Constant;
    Some(match name {
        "straight_harmonic" => base(
            name,
            curve(CurvePreset::Straight, PI, c(0.0)),
            CrossSection::harmonic(1.0),
            3,
            vec![1],
            solver(257, 32, 4.0, &["subset_bh", "single_mode_bh", "born_oppenheimer"]),
        ),
        "bent_arc_thin" => {
            let mut s = solver(129, 24, 0.4, &["single_mode_bh", REFERENCE_TAG]);
            s.states = 2;
            base(name, curve(CurvePreset::CircularArc, PI, c(0.5)), CrossSection::harmonic(100.0), 1, vec![1], s)
        }
        "twisted_anisotropic" => base(
            name,
            curve(CurvePreset::Straight, PI, c(0.0)),
            CrossSection::new(Family::HarmonicAnisotropic { omega2: c(1.0), omega3: c(2.0) }).with_twist(Profile::Linear { value: 0.0, slope: 0.1 }),
            3,
            vec![1],
            solver(129, 32, 5.0, &["single_mode_bh", "subset_bh"]),
        ),
        "shifted_harmonic" => base(
            name,
            curve(CurvePreset::Straight, PI, c(0.0)),
            CrossSection::harmonic(1.0).with_shift(Profile::Sine { offset: 0.0, amplitude: 1.0, frequency: 1.0, phase: 0.0 }, c(0.0)),
            3,
            vec![1],
            solver(129, 32, 6.0, &["single_mode_bh", "subset_bh"]),
        ),
        "avoided_crossing" => {
            let mut s = solver(161, 40, 3.5, &["subset_bh", "subset_bh_merged", "born_oppenheimer"]);
            s.transverse_points = [48, 9];
            s.transverse_extent = [3.5, 2.0];
            s.diabatic = true;
            let fam = Family::DoubleWell { barrier: c(2.0), separation: c(1.2), omega3: c(2.0), tilt: Profile::Linear { value: -0.4, slope: 0.2 } };
            base(name, curve(CurvePreset::Straight, 4.0, c(0.0)), CrossSection::new(fam), 4, vec![1, 2], s)
        }
        "arc_with_tails" => {
            let kappa = Profile::Window { offset: 0.0, amplitude: 0.5, start: 6.0, end: 13.0, smoothness: 0.3 };
            let mut s = solver(191, 24, 1.0, &["single_mode_bh", "subset_bh", REFERENCE_TAG]);
            s.states = 2;
            base(name, curve(CurvePreset::Bump, 19.0, kappa), CrossSection::harmonic(16.0), 3, vec![1], s)
        }
        "varying_harmonic" => base(
            name,
            curve(CurvePreset::Straight, PI, c(0.0)),
            CrossSection::new(Family::HarmonicIsotropic { omega: Profile::Linear { value: 1.0, slope: 0.1 } }),
            6,
            vec![1],
            solver(129, 32, 5.0, &["subset_bh", "single_mode_bh"]),
        ),
        _ => return None,
    })
}
