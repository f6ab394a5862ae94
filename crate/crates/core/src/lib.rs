//! Coupled-mode solver for quantum waveguides with curvature, torsion and
//! deformations of the cross-section along the guide.
//!
//! The crate follows the chain: reference curve and Tang frame
//! ([`geometry`]), clamped-slice transverse modes ([`transverse`]),
//! nonadiabatic coupling matrices ([`couplings`]), effective longitudinal
//! operators ([`effective`]), their spectra ([`longitudinal`]), the
//! adiabatic-to-diabatic transformation ([`diabatic`]) and a brute-force 3D
//! oracle ([`reference3d`]). [`scenario`] and [`pipeline`] wire these
//! together from a configuration file.

pub mod couplings;
pub mod diabatic;
pub mod effective;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod longitudinal;
pub mod pipeline;
pub mod profile;
pub mod reference3d;
pub mod scenario;
pub mod transverse;

pub use nalgebra;

pub use couplings::{coupling_matrices_exact, coupling_matrices_series, hellmann_feynman_f, CouplingSet, CouplingSlice, HfVariant, MomentTable, SeriesCouplings};
pub use diabatic::{adiabatic_to_diabatic, extra_terms, gauge_transform, path_ordered, solve_lyapunov, GaugeField};
pub use effective::{assemble_effective, merge_kinetic, single_mode_potentials, ApproximationTier, ClosedForms, EffectiveHamiltonian, PrimedSlice, SingleModeInputs, SingleModePotentials, TierTag};
pub use error::{Error, Result};
pub use geometry::{frenet_frame_and_curve, integrate_tang_angle, metric_factor, slice_geometry, uniform_grid, CurvePoint, CurvePreset, CurveSpec, SliceGeometry, TangFrame};
pub use longitudinal::{solve_spectrum, SpectralResult};
pub use pipeline::{run, RunResults};
pub use profile::Profile;
pub use reference3d::{solve_reference, Grid3D, ReferenceOptions, ReferenceResult};
pub use scenario::{preset, Scenario, TierRequest, PRESETS};
pub use transverse::{compute_mode_bundle, BundleRequest, CrossSection, Family, ModeBundle, SolveOptions, TransverseGrid};
