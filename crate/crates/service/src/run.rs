//! On-disk layout of a simulation run.
//!
//! A run directory holds `run.json` (the exported snapshot stream),
//! `scenario.json` (the scenario it was generated from) and `summary.json`.

use std::fs;
use std::path::{Path, PathBuf};

use transitgrid_core::cost::CostError;
use transitgrid_core::scenario::{load_scenario, write_scenario};
use transitgrid_core::store::StoreError;
use transitgrid_core::{run_horizon, HorizonError, PolicyKind, Scenario, ScenarioError, SnapshotStream};

use crate::summary::HorizonSummary;

pub const RUN_FILE: &str = "run.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Horizon(#[from] HorizonError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no exported run under {0} (expected a {RUN_FILE} in it or in a subdirectory)")]
    NoRun(PathBuf),
}

/// Scenario, stream and summary of one run, as served.
#[derive(Debug, Clone)]
pub struct Run {
    pub dir: PathBuf,
    pub scenario: Scenario,
    pub stream: SnapshotStream,
    pub summary: HorizonSummary,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Run `policy` on `scenario` and write the run directory.
pub fn simulate(scenario: Scenario, policy: PolicyKind, out: &Path) -> Result<Run, RunError> {
    let stream = run_horizon(&scenario, policy.policy())?;
    let summary = HorizonSummary::compute(&stream, &scenario)?;
    fs::create_dir_all(out).map_err(io(out))?;
    stream.export(out.join(RUN_FILE))?;
    let scenario_path = out.join(SCENARIO_FILE);
    write_scenario(&scenario, &scenario_path).map_err(io(&scenario_path))?;
    let summary_path = out.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&summary_path, text).map_err(io(&summary_path))?;
    Ok(Run { dir: out.to_path_buf(), scenario, stream, summary })
}

/// Directory holding the run to serve: `data` itself, or else the first
/// subdirectory in name order that contains a run file.
pub fn find_run_dir(data: &Path) -> Result<PathBuf, RunError> {
    if data.join(RUN_FILE).is_file() {
        return Ok(data.to_path_buf());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(data)
        .map_err(io(data))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(RUN_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.into_iter().next().ok_or_else(|| RunError::NoRun(data.to_path_buf()))
}

/// Import a run directory, checking the stream against its scenario.
pub fn load_run(dir: &Path) -> Result<Run, RunError> {
    let scenario = load_scenario(dir.join(SCENARIO_FILE))?;
    let stream = SnapshotStream::import(dir.join(RUN_FILE))?;
    stream.verify_scenario(&scenario)?;
    let summary = HorizonSummary::compute(&stream, &scenario)?;
    Ok(Run { dir: dir.to_path_buf(), scenario, stream, summary })
}
