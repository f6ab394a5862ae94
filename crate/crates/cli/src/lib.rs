//! Scenario-driven front end: loads a configuration, runs the solver
//! pipeline and writes plot-ready tables.

pub mod export;

use std::path::{Path, PathBuf};

use qwg_core::{preset, Error, Result, Scenario};

/// Exit status for bad input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_SOLVER: i32 = 3;

/// Command-line overrides applied on top of the configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub tiers: Vec<String>,
    pub seed: Option<u64>,
}

/// Loads a scenario from a TOML file, or a built-in preset when `source`
/// names one and is not an existing path.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    let path = Path::new(source);
    if !path.exists() {
        if let Some(s) = preset(source) {
            return Ok(s);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("cannot read `{source}`: {e}")))?;
    Scenario::from_toml(&text)
}

pub fn apply_overrides(mut s: Scenario, o: &Overrides) -> Result<Scenario> {
    if !o.tiers.is_empty() {
        s.solver.tiers = o.tiers.clone();
    }
    if let Some(seed) = o.seed {
        s.solver.seed = seed;
    }
    if let Some(dir) = &o.output_dir {
        s.output.directory = dir.to_string_lossy().into_owned();
    }
    s.validate()?;
    Ok(s)
}

/// Maps an error to the process exit status.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_SOLVER
    }
}

/// Runs a scenario and writes its results; returns the written files.
pub fn run_scenario(s: &Scenario) -> Result<Vec<PathBuf>> {
    let results = qwg_core::run(s)?;
    export::export_results(&results, Path::new(&s.output.directory))
}
