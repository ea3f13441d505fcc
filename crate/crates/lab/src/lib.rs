//! Scenario runner for the decoherent-histories laboratory.
//!
//! Scenario files (TOML) are parsed into [`Scenario`], validated against the
//! core's preconditions, dispatched, and written out as CSV tables plus a
//! JSON summary.

pub mod build;
pub mod error;
pub mod exec;
pub mod output;
pub mod run;
pub mod scenario;
pub mod stats;

use std::path::{Path, PathBuf};

pub use error::LabError;
pub use run::{run, validate, RunReport};
pub use scenario::{parse_scenario, parse_scenario_str, Kind, Scenario};

/// Options shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Invocation {
    pub scenario: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub validate_only: bool,
}

/// What a subcommand did.
#[derive(Debug)]
pub enum Completed {
    Validated(Scenario),
    Ran(Scenario, RunReport),
}

/// Loads the scenario, checks it matches the subcommand, applies overrides,
/// then validates or runs it.
pub fn execute(kind: Kind, inv: &Invocation) -> Result<Completed, LabError> {
    let mut scenario = parse_scenario(&inv.scenario)?;
    if scenario.kind() != kind {
        return Err(LabError::KindMismatch {
            expected: kind.to_string(),
            found: scenario.kind().to_string(),
        });
    }
    if let Some(seed) = inv.seed {
        scenario.set_seed(seed);
    }
    validate(&scenario)?;
    if inv.validate_only {
        return Ok(Completed::Validated(scenario));
    }
    let dir = inv
        .out_dir
        .clone()
        .or_else(|| scenario.output().dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new(".").to_path_buf());
    let report = run(&scenario, &dir)?;
    Ok(Completed::Ran(scenario, report))
}
