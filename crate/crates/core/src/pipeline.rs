//! Runs a scenario end to end: geometry, transverse modes, couplings,
//! effective tiers, longitudinal spectra, optional diabatization and the
//! optional 3D oracle.

use crate::couplings::{coupling_matrices_exact, coupling_matrices_series, CouplingSet, MomentTable};
use crate::diabatic::{adiabatic_to_diabatic, GaugeField};
use crate::effective::{assemble_effective, merge_kinetic, single_mode_potentials, ApproximationTier, ClosedForms, EffectiveHamiltonian, SingleModeInputs, SingleModePotentials, TierTag};
use crate::error::Result;
use crate::geometry::{slice_geometry, uniform_grid, SliceGeometry};
use crate::linalg::SymOperator;
use crate::longitudinal::{solve_spectrum, SpectralResult};
use crate::reference3d::{solve_reference, Grid3D, ReferenceOptions, ReferenceResult};
use crate::scenario::{Scenario, TierRequest};
use crate::transverse::{compute_mode_bundle, BundleRequest, ModeBundle, SolveOptions, TransverseGrid, TubeCheck};

#[derive(Debug, Clone)]
pub struct RunResults {
    pub scenario: Scenario,
    pub config_hash: String,
    pub geometry: Vec<SliceGeometry>,
    pub bundle: ModeBundle,
    pub couplings: CouplingSet,
    pub effective: Vec<EffectiveHamiltonian>,
    pub spectra: Vec<SpectralResult>,
    pub single_mode: SingleModePotentials,
    pub diabatic: Option<GaugeField>,
    pub reference: Option<ReferenceResult>,
    /// Lowest transverse energy plus `V1` at either end of the guide.
    pub asymptotic_threshold: f64,
    /// Max-norm gap between the second-order series `D` and the quadrature
    /// `D` on the middle slice; `None` for straight guides or outside the
    /// series domain.
    pub series_deviation: Option<f64>,
}

/// Series-versus-quadrature gap above which a warning is logged.
pub const SERIES_WARN: f64 = 1e-2;

fn series_check(bundle: &ModeBundle, geometry: &[SliceGeometry], couplings: &CouplingSet) -> Option<f64> {
    let i = geometry.len() / 2;
    let table = MomentTable::build(bundle, &geometry[i], i, 4).ok()?;
    let series = coupling_matrices_series(&table, &geometry[i], 2).ok()?;
    let sub = &couplings.subset;
    let exact = &couplings.slices[i].d;
    let mut gap = 0.0f64;
    for (a, &m) in sub.iter().enumerate() {
        for (b, &n) in sub.iter().enumerate() {
            gap = gap.max((series.d[(m, n)] - exact[(a, b)]).abs());
        }
    }
    if gap > SERIES_WARN {
        log::warn!("series D deviates from quadrature by {gap:e} at u1 = {}", geometry[i].u1);
    }
    Some(gap)
}

impl RunResults {
    pub fn spectrum(&self, tier: TierTag) -> Option<&SpectralResult> {
        self.spectra.iter().find(|s| s.tier == tier.tag())
    }
}

/// Executes every requested tier of a validated scenario.
pub fn run(scenario: &Scenario) -> Result<RunResults> {
    scenario.validate()?;
    let curve = scenario.curve.build()?;
    let s = &scenario.solver;
    let u1 = uniform_grid(curve.u1_min, curve.u1_max, s.slices);
    let geometry = slice_geometry(&curve, &u1, scenario.curve.theta0)?;
    let grid = scenario.transverse_grid()?;
    let cs = &scenario.cross_section;
    let tube = (!curve.is_straight()).then(|| geometry.iter().map(|g| TubeCheck { u1: g.u1, kappa: g.curve.kappa, theta: g.theta }).collect());
    log::info!("solving transverse modes on {} slices", u1.len());
    let bundle = compute_mode_bundle(&BundleRequest {
        grid,
        cross_section: cs,
        slices: &u1,
        modes: scenario.modes.total,
        tube,
        solve: SolveOptions { tol: s.mode_tolerance, seed: s.seed, max_iter: 3000 },
    })?;
    let subset = scenario.modes.subset0();
    let couplings = coupling_matrices_exact(&bundle, &geometry, &subset, &cs.v1)?;
    let series_deviation = if curve.is_straight() { None } else { series_check(&bundle, &geometry, &couplings) };
    let first = subset[0];
    let single = SingleModeInputs::from_bundle(&bundle, &geometry, first);
    let tiers = scenario.tiers()?;
    let mut effective = Vec::new();
    let mut primed = None;
    for t in &tiers {
        let TierRequest::Effective(tag) = *t else { continue };
        let tier = match tag {
            TierTag::SingleModeBh => ApproximationTier::new(tag, vec![first])?,
            _ => ApproximationTier::new(tag, subset.clone())?,
        };
        if tag == TierTag::SubsetBhMerged && primed.is_none() {
            primed = Some(merge_kinetic(&couplings)?);
        }
        effective.push(assemble_effective(&couplings, &tier, Some(&single), primed.as_deref())?);
    }
    let states = |h: &EffectiveHamiltonian| s.states.min(h.assembled.dim());
    let spectra = effective
        .iter()
        .map(|h| {
            log::info!("longitudinal spectrum for {}", h.tier.tag.tag());
            solve_spectrum(h, states(h), s.tolerance)
        })
        .collect::<Result<Vec<_>>>()?;
    let closed = ClosedForms { twist: cs.has_twist(), shift: cs.has_shift() };
    let single_mode = single_mode_potentials(&bundle, &geometry, cs, first, closed)?;
    let diabatic = if s.diabatic { Some(adiabatic_to_diabatic(&couplings, None)?) } else { None };
    let reference = if tiers.contains(&TierRequest::Reference) {
        let [n1, n2, n3] = scenario.reference_points();
        let tg = TransverseGrid::new(n2, n3, grid.lx, grid.ly)?;
        let g3 = Grid3D::new(n1, curve.u1_min, curve.u1_max, tg)?;
        log::info!("3D reference on {} points", g3.len());
        let opts = ReferenceOptions { n_states: s.states, seed: s.seed, ..Default::default() };
        Some(solve_reference(&curve, scenario.curve.theta0, cs, &g3, &opts)?)
    } else {
        None
    };
    let last = bundle.n_slices() - 1;
    let asymptotic_threshold = [0, last].iter().map(|&i| bundle.energies[i][0] + cs.v1.value(u1[i])).fold(f64::INFINITY, f64::min);
    Ok(RunResults {
        scenario: scenario.clone(),
        config_hash: scenario.hash(),
        geometry,
        bundle,
        couplings,
        effective,
        spectra,
        single_mode,
        diabatic,
        reference,
        asymptotic_threshold,
        series_deviation,
    })
}
