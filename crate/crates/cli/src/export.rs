//! Delimiter-separated result tables and the JSON run summary.
//!
//! Every table starts with `#` provenance lines followed by a header row.
//! Floating-point values are written in the shortest form that parses back
//! to the same bits.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qwg_core::nalgebra::DMatrix;
use qwg_core::{CouplingSlice, Error, Result, RunResults};
use serde::Serialize;

pub const COUPLING_KINDS: [&str; 8] = ["v", "d", "c", "f", "g", "vbh", "d_ring", "l"];

/// Header lines identifying the run that produced a table.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub version: String,
    pub scenario: String,
    pub longitudinal_tolerance: f64,
    pub transverse_tolerance: f64,
    pub seed: u64,
}

impl Provenance {
    pub fn from_results(r: &RunResults) -> Self {
        let s = &r.scenario.solver;
        Self {
            config_sha256: r.config_hash.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: r.scenario.name.clone(),
            longitudinal_tolerance: s.tolerance,
            transverse_tolerance: s.mode_tolerance,
            seed: s.seed,
        }
    }

    fn lines(&self, table: &str) -> String {
        format!(
            "# table = {table}\n# scenario = {}\n# config_sha256 = {}\n# version = {}\n# tolerances = longitudinal {:e}, transverse {:e}\n# seed = {}\n",
            self.scenario, self.config_sha256, self.version, self.longitudinal_tolerance, self.transverse_tolerance, self.seed
        )
    }
}

fn io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Opens a table, writes the provenance block and returns a CSV writer.
fn table(path: &Path, name: &str, prov: &Provenance, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(prov.lines(name).as_bytes())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header).map_err(io)?;
    Ok(w)
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_couplings(path: &Path, slices: &[CouplingSlice], subset: &[usize], prov: &Provenance) -> Result<()> {
    let mut w = table(path, "couplings", prov, &["u1", "matrix", "row", "col", "value"])?;
    for s in slices {
        for kind in COUPLING_KINDS {
            let m = component(s, kind);
            for a in 0..m.nrows() {
                for b in 0..m.ncols() {
                    w.write_record([num(s.u1), kind.to_string(), (subset[a] + 1).to_string(), (subset[b] + 1).to_string(), num(m[(a, b)])]).map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn component<'a>(s: &'a CouplingSlice, kind: &str) -> &'a DMatrix<f64> {
    match kind {
        "v" => &s.v,
        "d" => &s.d,
        "c" => &s.c,
        "f" => &s.f,
        "g" => &s.g,
        "vbh" => &s.vbh,
        "d_ring" => &s.d_ring,
        "l" => &s.l,
        _ => unreachable!("unknown coupling component {kind}"),
    }
}

/// Reads a coupling table back into per-slice matrices.
pub fn read_couplings(path: &Path) -> Result<Vec<CouplingSlice>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(io)?;
    let mut rows: Vec<(f64, String, usize, usize, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io)?;
        let parse_f = |i: usize| rec[i].parse::<f64>().map_err(|e| Error::Parse(format!("{e} in `{}`", &rec[i])));
        let parse_u = |i: usize| rec[i].parse::<usize>().map_err(|e| Error::Parse(format!("{e} in `{}`", &rec[i])));
        rows.push((parse_f(0)?, rec[1].to_string(), parse_u(2)?, parse_u(3)?, parse_f(4)?));
    }
    let mut modes: Vec<usize> = rows.iter().map(|r| r.2).collect();
    modes.sort_unstable();
    modes.dedup();
    let n = modes.len();
    let pos = |m: usize| modes.binary_search(&m).expect("mode listed");
    let mut out: Vec<CouplingSlice> = Vec::new();
    for (u1, kind, a, b, v) in rows {
        if out.last().map(|s| s.u1) != Some(u1) {
            let z = DMatrix::zeros(n, n);
            out.push(CouplingSlice { u1, v: z.clone(), d: z.clone(), c: z.clone(), f: z.clone(), g: z.clone(), vbh: z.clone(), d_ring: z.clone(), l: z });
        }
        let s = out.last_mut().unwrap();
        let m = match kind.as_str() {
            "v" => &mut s.v,
            "d" => &mut s.d,
            "c" => &mut s.c,
            "f" => &mut s.f,
            "g" => &mut s.g,
            "vbh" => &mut s.vbh,
            "d_ring" => &mut s.d_ring,
            "l" => &mut s.l,
            other => return Err(Error::Parse(format!("unknown matrix `{other}`"))),
        };
        m[(pos(a), pos(b))] = v;
    }
    Ok(out)
}

fn write_potentials(path: &Path, r: &RunResults, prov: &Provenance) -> Result<()> {
    let mut w = table(path, "effective_potentials", prov, &["tier", "u1", "row", "col", "potential", "derivative", "weight"])?;
    for h in &r.effective {
        for (i, u) in h.u1.iter().enumerate() {
            let n = h.channels();
            for a in 0..n {
                for b in 0..n {
                    w.write_record([
                        h.tier.tag.tag().to_string(),
                        num(*u),
                        (h.tier.subset[a] + 1).to_string(),
                        (h.tier.subset[b] + 1).to_string(),
                        num(h.potential[i][(a, b)]),
                        num(h.derivative[i][(a, b)]),
                        num(h.weight[i][(a, b)]),
                    ])
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_single_mode(path: &Path, r: &RunResults, prov: &Provenance) -> Result<()> {
    let p = &r.single_mode;
    let mut w = table(path, "single_mode_potentials", prov, &["u1", "v_geo", "v_surface", "v_bh_diag", "v_twist", "v_shift"])?;
    let opt = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|x| num(x[i])).unwrap_or_default();
    for i in 0..p.u1.len() {
        w.write_record([num(p.u1[i]), num(p.v_geo[i]), num(p.v_surface[i]), num(p.v_bh_diag[i]), opt(&p.v_twist, i), opt(&p.v_shift, i)]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Relative deviation of each tier's eigenvalues from the 3D reference.
pub fn relative_errors(r: &RunResults, tier: &str) -> Vec<Option<f64>> {
    let Some(s) = r.spectra.iter().find(|s| s.tier == tier) else { return vec![] };
    s.eigenvalues.iter().enumerate().map(|(k, e)| r.reference.as_ref().and_then(|x| x.eigenvalues.get(k)).map(|x| ((e - x) / x).abs())).collect()
}

fn write_spectra(path: &Path, r: &RunResults, prov: &Provenance) -> Result<()> {
    let mut w = table(path, "spectra", prov, &["tier", "state", "energy", "threshold", "bound", "residual", "rel_error_vs_reference3d"])?;
    for s in &r.spectra {
        let rel = relative_errors(r, s.tier);
        for (k, e) in s.eigenvalues.iter().enumerate() {
            let re = rel.get(k).copied().flatten().map(num).unwrap_or_default();
            w.write_record([s.tier.to_string(), (k + 1).to_string(), num(*e), num(s.threshold), (*e < s.threshold).to_string(), num(s.residuals[k]), re]).map_err(io)?;
        }
    }
    if let Some(x) = &r.reference {
        let thr = r.asymptotic_threshold;
        for (k, e) in x.eigenvalues.iter().enumerate() {
            w.write_record(["reference3d".to_string(), (k + 1).to_string(), num(*e), num(thr), (*e < thr).to_string(), num(x.residuals[k]), String::new()]).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_profiles(path: &Path, r: &RunResults, prov: &Provenance) -> Result<()> {
    let mut w = table(path, "longitudinal_profiles", prov, &["tier", "state", "channel", "u1", "psi"])?;
    for (s, h) in r.spectra.iter().zip(&r.effective) {
        for (k, prof) in s.profiles.iter().enumerate() {
            for (c, ch) in prof.iter().enumerate() {
                for (u, v) in h.u1.iter().zip(ch) {
                    w.write_record([s.tier.to_string(), (k + 1).to_string(), (h.tier.subset[c] + 1).to_string(), num(*u), num(*v)]).map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_diabatic(path: &Path, r: &RunResults, prov: &Provenance) -> Result<()> {
    let Some(d) = &r.diabatic else { return Ok(()) };
    let n = d.a[0].nrows();
    let mut header = vec!["u1".to_string(), "gamma".to_string(), "residual_f".to_string()];
    for a in 0..n {
        for b in 0..n {
            header.push(format!("a_{}{}", a + 1, b + 1));
        }
    }
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = table(path, "diabatic", prov, &hdr)?;
    for i in 0..d.u1.len() {
        let mut row = vec![num(d.u1[i]), d.gamma.as_ref().map(|g| num(g[i])).unwrap_or_default(), num(d.residual_f[i].amax())];
        for a in 0..n {
            for b in 0..n {
                row.push(num(d.a[i][(a, b)]));
            }
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TierSummary<'a> {
    tier: &'a str,
    eigenvalues: &'a [f64],
    threshold: f64,
    bound: Vec<bool>,
    max_residual: f64,
    rel_error_vs_reference3d: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
struct DiabaticSummary {
    residual_f_sup: f64,
    closed_form_defect: Option<f64>,
    max_polar_correction: f64,
}

#[derive(Debug, Serialize)]
struct ReferenceSummary<'a> {
    eigenvalues: &'a [f64],
    threshold: f64,
    bound: Vec<bool>,
    hermiticity_defect: f64,
    max_residual: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    provenance: &'a Provenance,
    modes_computed: usize,
    subset: Vec<usize>,
    coupling_symmetry_defect: f64,
    coupling_tail_estimate: f64,
    series_deviation: Option<f64>,
    mode_orthonormality_defect: f64,
    tiers: Vec<TierSummary<'a>>,
    reference3d: Option<ReferenceSummary<'a>>,
    diabatic: Option<DiabaticSummary>,
    files: Vec<String>,
}

/// Writes every requested table into `dir` and returns the created paths.
pub fn export_results(r: &RunResults, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let prov = Provenance::from_results(r);
    let formats = &r.scenario.output.formats;
    let mut files = Vec::new();
    if formats.iter().any(|f| f == "csv") {
        let subset = r.scenario.modes.subset0();
        let jobs: [(&str, &dyn Fn(&Path) -> Result<()>); 5] = [
            ("couplings.csv", &|p| write_couplings(p, &r.couplings.slices, &subset, &prov)),
            ("effective_potentials.csv", &|p| write_potentials(p, r, &prov)),
            ("single_mode_potentials.csv", &|p| write_single_mode(p, r, &prov)),
            ("spectra.csv", &|p| write_spectra(p, r, &prov)),
            ("longitudinal_profiles.csv", &|p| write_profiles(p, r, &prov)),
        ];
        for (name, job) in jobs {
            let p = dir.join(name);
            job(&p)?;
            files.push(p);
        }
        if r.diabatic.is_some() {
            let p = dir.join("diabatic.csv");
            write_diabatic(&p, r, &prov)?;
            files.push(p);
        }
    }
    let cfg = dir.join("scenario.toml");
    fs::write(&cfg, r.scenario.to_toml()?)?;
    files.push(cfg);
    if formats.iter().any(|f| f == "json") {
        let p = dir.join("summary.json");
        let names = files.iter().chain(std::iter::once(&p)).filter_map(|f| f.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
        let summary = Summary {
            provenance: &prov,
            modes_computed: r.bundle.n_modes(),
            subset: r.scenario.modes.subset.clone(),
            coupling_symmetry_defect: r.couplings.symmetry_defect,
            coupling_tail_estimate: r.couplings.tail_estimate,
            series_deviation: r.series_deviation,
            mode_orthonormality_defect: r.bundle.orthonormality_defect(),
            tiers: r
                .spectra
                .iter()
                .map(|s| TierSummary {
                    tier: s.tier,
                    eigenvalues: &s.eigenvalues,
                    threshold: s.threshold,
                    bound: s.bound(),
                    max_residual: s.residuals.iter().copied().fold(0.0, f64::max),
                    rel_error_vs_reference3d: relative_errors(r, s.tier),
                })
                .collect(),
            reference3d: r.reference.as_ref().map(|x| ReferenceSummary {
                eigenvalues: &x.eigenvalues,
                threshold: r.asymptotic_threshold,
                bound: x.eigenvalues.iter().map(|e| *e < r.asymptotic_threshold).collect(),
                hermiticity_defect: x.hermiticity_defect,
                max_residual: x.residuals.iter().copied().fold(0.0, f64::max),
            }),
            diabatic: r.diabatic.as_ref().map(|d| DiabaticSummary {
                residual_f_sup: d.residual_sup(),
                closed_form_defect: d.closed_form_defect,
                max_polar_correction: d.max_polar_correction,
            }),
            files: names,
        };
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&p, text + "\n")?;
        files.push(p);
    }
    Ok(files)
}
