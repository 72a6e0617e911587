//! The per-step snapshot stream produced by a simulation run, its queries,
//! and its run-file persistence.
//!
//! Run files are JSON documents: a header carrying the scenario fingerprint
//! and a digest of the snapshot payload, followed by every snapshot. The
//! digest is recomputed on import so a hand-edited value is rejected.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::powerflow::{ViolationKind, ViolationList};
use crate::scenario::{BebId, LineId, NodeId, PerUnitBases, Scenario, StationId, TimeGrid, TouPeriod};
use crate::transit::Location;

pub const RUN_FORMAT: &str = "transitgrid-run";
pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub v_pu: f64,
    pub p_load_kw: f64,
    pub q_load_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub id: LineId,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub i_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub id: StationId,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub n_bebs_present: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BebRecord {
    pub id: BebId,
    pub soc_kwh: f64,
    pub velocity_mph: f64,
    pub location: Location,
    pub charging_kw: f64,
    /// Energy gained and spent over this step.
    pub charge_kwh: f64,
    pub discharge_kwh: f64,
    pub last_station: Option<StationId>,
    pub next_station: Option<StationId>,
    pub emergency: bool,
    pub energy_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub tou_usd_per_kwh: f64,
    pub tou_period: TouPeriod,
    pub lmp_usd_per_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFlags {
    pub violations: ViolationList,
    pub infeasible_at_zero: bool,
    pub repair_rounds: u32,
}

/// Complete observable state of both systems at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub clock: String,
    pub nodes: Vec<NodeRecord>,
    pub lines: Vec<LineRecord>,
    pub stations: Vec<StationRecord>,
    pub bebs: Vec<BebRecord>,
    pub substation_p_kw: f64,
    pub substation_q_kvar: f64,
    pub prices: Prices,
    pub flags: StepFlags,
}

impl Snapshot {
    pub fn total_station_kw(&self) -> f64 {
        self.stations.iter().map(|s| s.p_kw).sum()
    }

    pub fn has_emergency(&self) -> bool {
        self.bebs.iter().any(|b| b.emergency)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub format: String,
    pub format_version: u32,
    pub scenario_name: String,
    pub scenario_fingerprint: String,
    pub policy: String,
    pub grid: TimeGrid,
    pub bases: PerUnitBases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStream {
    pub header: StreamHeader,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("step {t} is outside the stored horizon 0..{len}")]
    OutOfRange { t: usize, len: usize },
    #[error("unknown component {0:?}; expected node:<id>, line:<id>, station:<id>, beb:<id> or system")]
    UnknownComponent(String),
    #[error("unknown field {field:?} for {component}; valid fields: {}", .valid.join(", "))]
    UnknownField { component: String, field: String, valid: Vec<&'static str> },
    #[error("cannot access run file {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run file: {0}")]
    Corrupt(String),
    #[error("unsupported run file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("fingerprint mismatch: {what} is {found}, expected {expected}")]
    FingerprintMismatch { what: &'static str, found: String, expected: String },
}

/// Textual component reference used by queries, e.g. `station:3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentRef {
    Node(NodeId),
    Line(LineId),
    Station(StationId),
    Beb(BebId),
    System,
}

impl ComponentRef {
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        if text == "system" {
            return Ok(ComponentRef::System);
        }
        let err = || StoreError::UnknownComponent(text.to_string());
        let (kind, id) = text.split_once(':').ok_or_else(err)?;
        let id: u32 = id.parse().map_err(|_| err())?;
        match kind {
            "node" => Ok(ComponentRef::Node(NodeId(id))),
            "line" => Ok(ComponentRef::Line(LineId(id))),
            "station" => Ok(ComponentRef::Station(StationId(id))),
            "beb" => Ok(ComponentRef::Beb(BebId(id))),
            _ => Err(err()),
        }
    }

    pub fn kind(&self) -> ComponentKind {
        match self {
            ComponentRef::Node(_) => ComponentKind::Node,
            ComponentRef::Line(_) => ComponentKind::Line,
            ComponentRef::Station(_) => ComponentKind::Station,
            ComponentRef::Beb(_) => ComponentKind::Beb,
            ComponentRef::System => ComponentKind::System,
        }
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentRef::Node(id) => id.fmt(f),
            ComponentRef::Line(id) => id.fmt(f),
            ComponentRef::Station(id) => id.fmt(f),
            ComponentRef::Beb(id) => id.fmt(f),
            ComponentRef::System => f.write_str("system"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Node,
    Line,
    Station,
    Beb,
    System,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 5] =
        [ComponentKind::Node, ComponentKind::Line, ComponentKind::Station, ComponentKind::Beb, ComponentKind::System];

    /// Queryable numeric fields and their units.
    pub fn fields(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            ComponentKind::Node => &[("v_pu", "pu"), ("p_load_kw", "kW"), ("q_load_kvar", "kvar")],
            ComponentKind::Line => &[("p_kw", "kW"), ("q_kvar", "kvar"), ("i_pu", "pu")],
            ComponentKind::Station => &[("p_kw", "kW"), ("q_kvar", "kvar"), ("n_bebs_present", "count")],
            ComponentKind::Beb => &[
                ("soc_kwh", "kWh"),
                ("velocity_mph", "mph"),
                ("charging_kw", "kW"),
                ("charge_kwh", "kWh"),
                ("discharge_kwh", "kWh"),
            ],
            ComponentKind::System => &[
                ("tou_usd_per_kwh", "$/kWh"),
                ("lmp_usd_per_mwh", "$/MWh"),
                ("substation_p_kw", "kW"),
                ("substation_q_kvar", "kvar"),
                ("total_station_kw", "kW"),
                ("violation_count", "count"),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub component: String,
    pub field: String,
    pub unit: &'static str,
    pub values: Vec<f64>,
}

impl SnapshotStream {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshot_at(&self, t: usize) -> Result<&Snapshot, StoreError> {
        self.snapshots.get(t).ok_or(StoreError::OutOfRange { t, len: self.snapshots.len() })
    }

    pub fn series(&self, component: &str, field: &str) -> Result<TimeSeries, StoreError> {
        let comp = ComponentRef::parse(component)?;
        let kind = comp.kind();
        let unknown_field = || StoreError::UnknownField {
            component: comp.to_string(),
            field: field.to_string(),
            valid: kind.fields().iter().map(|f| f.0).collect(),
        };
        let unit = kind.fields().iter().find(|f| f.0 == field).ok_or_else(unknown_field)?.1;
        let missing = || StoreError::UnknownComponent(component.to_string());
        // Components are listed in id order 1..n in every snapshot.
        let first = self.snapshots.first();
        let pos = |id: u32, len: usize| -> Result<usize, StoreError> {
            (id >= 1 && (id as usize) <= len).then(|| id as usize - 1).ok_or_else(missing)
        };
        let pick: Box<dyn Fn(&Snapshot) -> f64> = match comp {
            ComponentRef::Node(id) => {
                let k = pos(id.0, first.map_or(0, |s| s.nodes.len()))?;
                match field {
                    "v_pu" => Box::new(move |s| s.nodes[k].v_pu),
                    "p_load_kw" => Box::new(move |s| s.nodes[k].p_load_kw),
                    _ => Box::new(move |s| s.nodes[k].q_load_kvar),
                }
            }
            ComponentRef::Line(id) => {
                let k = pos(id.0, first.map_or(0, |s| s.lines.len()))?;
                match field {
                    "p_kw" => Box::new(move |s| s.lines[k].p_kw),
                    "q_kvar" => Box::new(move |s| s.lines[k].q_kvar),
                    _ => Box::new(move |s| s.lines[k].i_pu),
                }
            }
            ComponentRef::Station(id) => {
                let k = pos(id.0, first.map_or(0, |s| s.stations.len()))?;
                match field {
                    "p_kw" => Box::new(move |s| s.stations[k].p_kw),
                    "q_kvar" => Box::new(move |s| s.stations[k].q_kvar),
                    _ => Box::new(move |s| f64::from(s.stations[k].n_bebs_present)),
                }
            }
            ComponentRef::Beb(id) => {
                let k = pos(id.0, first.map_or(0, |s| s.bebs.len()))?;
                match field {
                    "soc_kwh" => Box::new(move |s| s.bebs[k].soc_kwh),
                    "velocity_mph" => Box::new(move |s| s.bebs[k].velocity_mph),
                    "charging_kw" => Box::new(move |s| s.bebs[k].charging_kw),
                    "charge_kwh" => Box::new(move |s| s.bebs[k].charge_kwh),
                    _ => Box::new(move |s| s.bebs[k].discharge_kwh),
                }
            }
            ComponentRef::System => match field {
                "tou_usd_per_kwh" => Box::new(|s| s.prices.tou_usd_per_kwh),
                "lmp_usd_per_mwh" => Box::new(|s| s.prices.lmp_usd_per_mwh),
                "substation_p_kw" => Box::new(|s| s.substation_p_kw),
                "substation_q_kvar" => Box::new(|s| s.substation_q_kvar),
                "total_station_kw" => Box::new(|s| s.total_station_kw()),
                _ => Box::new(|s| s.flags.violations.len() as f64),
            },
        };
        Ok(TimeSeries {
            component: comp.to_string(),
            field: field.to_string(),
            unit,
            values: self.snapshots.iter().map(pick).collect(),
        })
    }

    /// Count of limit violations by kind over the whole stream.
    pub fn violation_counts(&self) -> Vec<(ViolationKind, usize)> {
        [ViolationKind::Undervoltage, ViolationKind::Overvoltage, ViolationKind::Overcurrent]
            .into_iter()
            .map(|kind| {
                let n = self.snapshots.iter().flat_map(|s| &s.flags.violations).filter(|v| v.kind == kind).count();
                (kind, n)
            })
            .collect()
    }

    /// Re-check the derived fields of every snapshot against the raw ones.
    pub fn check_consistency(&self, s: &Scenario) -> Vec<String> {
        let mut problems = Vec::new();
        for snap in &self.snapshots {
            for st in &snap.stations {
                let present = snap.bebs.iter().filter(|b| b.location.station() == Some(st.id)).count() as u32;
                if present != st.n_bebs_present {
                    problems.push(format!("t={} {}: n_bebs_present {} but {present} BEBs located there", snap.t, st.id, st.n_bebs_present));
                }
                let kw: f64 = snap
                    .bebs
                    .iter()
                    .filter(|b| b.charging_kw > 0.0 && b.location.station() == Some(st.id))
                    .map(|b| b.charging_kw)
                    .sum();
                if kw != st.p_kw {
                    problems.push(format!("t={} {}: p_kw {} but BEBs draw {kw}", snap.t, st.id, st.p_kw));
                }
            }
            for (node, rec) in s.nodes.iter().zip(&snap.nodes) {
                let station_kw: f64 = s
                    .stations
                    .iter()
                    .zip(&snap.stations)
                    .filter(|(st, _)| st.linked_node == node.id)
                    .map(|(_, r)| r.p_kw)
                    .sum();
                let expected = node.inflexible_p_kw[snap.t] + station_kw;
                if (expected - rec.p_load_kw).abs() > 1e-9 * expected.abs().max(1.0) {
                    problems.push(format!("t={} {}: p_load {} but inflexible + station = {expected}", snap.t, node.id, rec.p_load_kw));
                }
            }
        }
        problems
    }

    fn payload_digest(snapshots: &[Snapshot]) -> String {
        let bytes = serde_json::to_vec(snapshots).expect("snapshots serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn export_string(&self) -> String {
        let file = RunFile {
            header: self.header.clone(),
            content_digest: Self::payload_digest(&self.snapshots),
            snapshots: self.snapshots.clone(),
        };
        let mut text = serde_json::to_string(&file).expect("run file serializes");
        text.push('\n');
        text
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        fs::write(path, self.export_string())
            .map_err(|source| StoreError::Io { path: path.display().to_string(), source })
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
        Self::import_str(&text)
    }

    pub fn import_str(text: &str) -> Result<Self, StoreError> {
        let file: RunFile = serde_json::from_str(text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        if file.header.format != RUN_FORMAT {
            return Err(StoreError::Corrupt(format!("format tag {:?} is not {RUN_FORMAT:?}", file.header.format)));
        }
        if file.header.format_version != RUN_FORMAT_VERSION {
            return Err(StoreError::Version { found: file.header.format_version, expected: RUN_FORMAT_VERSION });
        }
        let digest = Self::payload_digest(&file.snapshots);
        if digest != file.content_digest {
            return Err(StoreError::FingerprintMismatch {
                what: "snapshot content digest",
                found: digest,
                expected: file.content_digest,
            });
        }
        let expected_len = file.header.grid.len();
        if file.snapshots.len() != expected_len {
            return Err(StoreError::Corrupt(format!("{} snapshots, expected {expected_len}", file.snapshots.len())));
        }
        if let Some((k, s)) = file.snapshots.iter().enumerate().find(|(k, s)| s.t != *k) {
            return Err(StoreError::Corrupt(format!("snapshot {k} is labelled t={}", s.t)));
        }
        Ok(Self { header: file.header, snapshots: file.snapshots })
    }

    /// Confirm the stream was generated from `scenario`.
    pub fn verify_scenario(&self, scenario: &Scenario) -> Result<(), StoreError> {
        let fp = scenario.fingerprint();
        if fp != self.header.scenario_fingerprint {
            return Err(StoreError::FingerprintMismatch {
                what: "scenario fingerprint",
                found: fp,
                expected: self.header.scenario_fingerprint.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    header: StreamHeader,
    content_digest: String,
    snapshots: Vec<Snapshot>,
}
