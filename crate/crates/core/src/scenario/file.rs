//! Scenario file format: a single JSON document mirroring [`Scenario`].
//!
//! Floats are written in shortest round-trip decimal form and parsed with
//! correct rounding, so `read(write(s)) == s` bit for bit.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{validate_scenario, Scenario, ScenarioError, SCENARIO_FORMAT_VERSION};

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Read, parse and fully validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    read_scenario_str(&text)
}

pub fn read_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != SCENARIO_FORMAT_VERSION {
        return Err(ScenarioError::Version {
            found: probe.format_version,
            expected: SCENARIO_FORMAT_VERSION,
        });
    }
    let scenario: Scenario = serde_json::from_str(text)?;
    let report = validate_scenario(&scenario);
    if report.has_dangling() {
        Err(ScenarioError::DanglingReference(report))
    } else if !report.is_empty() {
        Err(ScenarioError::Validation(report))
    } else {
        Ok(scenario)
    }
}

pub fn write_scenario_string(s: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("scenario serializes");
    text.push('\n');
    text
}

pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, write_scenario_string(s))
}
