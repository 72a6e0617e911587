//! Static scenario model: distribution feeder, transit network, fleet,
//! tariff and the time grid they share.
//!
//! A [`Scenario`] is immutable once loaded. Every cross reference is by id;
//! [`Scenario::index`] builds the lookup tables the simulation needs.

mod feeder33;
mod file;
pub mod parkcity;
mod time;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use file::{load_scenario, read_scenario_str, write_scenario, write_scenario_string};
pub use time::{timestep_clock, ClockLabel, TimeGrid, TimeGridError};
pub use validate::{validate_scenario, Finding, FindingKind, ValidationReport};

/// Current version of the scenario file schema.
pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Shortest and longest charger-to-charger distance a route may schedule.
pub const MIN_SEGMENT_MILES: f64 = 3.0;
pub const MAX_SEGMENT_MILES: f64 = 15.5;

/// Allowed dwell at a charger stop, in steps.
pub const MIN_DWELL_STEPS: u32 = 1;
pub const MAX_DWELL_STEPS: u32 = 2;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            /// Component prefix used in textual ids such as `node:3`.
            pub const PREFIX: &'static str = $prefix;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}:{}", $prefix, self.0)
            }
        }
    };
}

id_type!(
    /// Power node id, `1..=n_nodes`; node 1 is the substation.
    NodeId,
    "node"
);
id_type!(LineId, "line");
id_type!(StationId, "station");
id_type!(RoadId, "road");
id_type!(RouteId, "route");
id_type!(BebId, "beb");

/// Per-unit system bases of the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBases {
    pub kv: f64,
    pub mva: f64,
}

impl PerUnitBases {
    pub fn kw_per_pu(&self) -> f64 {
        self.mva * 1000.0
    }

    /// Base current in amperes (single-phase equivalent of a three-phase base).
    pub fn base_amps(&self) -> f64 {
        self.mva * 1000.0 / (3f64.sqrt() * self.kv)
    }
}

impl Default for PerUnitBases {
    fn default() -> Self {
        Self { kv: 12.66, mva: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNode {
    pub id: NodeId,
    pub is_substation: bool,
    /// Per-unit voltage magnitude bounds.
    pub v_min: f64,
    pub v_max: f64,
    /// Voltage angle, carried for display only. The linearized solver never
    /// computes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    /// Fixed customer load per step.
    pub inflexible_p_kw: Vec<f64>,
    pub inflexible_q_kvar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLine {
    pub id: LineId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Ampacity in per-unit current.
    pub i_max_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingStation {
    pub id: StationId,
    pub name: String,
    pub linked_node: NodeId,
    /// Rating of a single charger.
    pub charger_rating_kw: f64,
    pub n_chargers: u32,
    /// Charger power factor; reactive draw is `p * tan(acos(pf))`.
    pub power_factor: f64,
    /// Display position, arbitrary planar units.
    pub layout_xy: [f64; 2],
}

impl ChargingStation {
    pub fn capacity_kw(&self) -> f64 {
        self.charger_rating_kw * f64::from(self.n_chargers)
    }

    pub fn reactive_per_kw(&self) -> f64 {
        let pf = self.power_factor;
        (1.0 - pf * pf).max(0.0).sqrt() / pf
    }
}

/// Association through which a station's charging demand enters the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingLink {
    pub station_id: StationId,
    pub node_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub id: RoadId,
    pub endpoints: [StationId; 2],
    pub length_miles: f64,
}

/// One scheduled call of a route at a stop, in route-time steps.
///
/// Charger stops use the station id as `stop_id`; other stops must use ids
/// that do not collide with any station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopVisit {
    pub stop_id: u32,
    pub has_charger: bool,
    pub arrival: u32,
    pub departure: u32,
}

impl StopVisit {
    pub fn station(&self) -> Option<StationId> {
        self.has_charger.then_some(StationId(self.stop_id))
    }

    pub fn dwell_steps(&self) -> u32 {
        self.departure - self.arrival
    }
}

/// A timetabled route. Steps are route time; a BEB running the route at
/// offset `o` is where the timetable puts a vehicle at route time `t + o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: RouteId,
    pub stops: Vec<StopVisit>,
    /// Distance between consecutive stops; `len == stops.len() - 1`.
    pub segment_miles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beb {
    pub id: BebId,
    pub route_id: RouteId,
    /// Shift into the route timetable, in steps.
    pub offset_steps: u32,
    pub capacity_kwh: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    pub soc0_kwh: f64,
    pub consumption_kwh_per_mile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TouPeriod {
    OffPeak,
    MidPeak,
    Peak,
}

impl TouPeriod {
    /// Period for a wall-clock minute of day: peak 18:00-24:00, mid-peak
    /// 05:00-18:00, off-peak 00:00-05:00.
    pub fn for_minute_of_day(minute: u32) -> Self {
        match minute % 1440 {
            m if m >= 18 * 60 => TouPeriod::Peak,
            m if m >= 5 * 60 => TouPeriod::MidPeak,
            _ => TouPeriod::OffPeak,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TouPeriod::OffPeak => "off-peak",
            TouPeriod::MidPeak => "mid-peak",
            TouPeriod::Peak => "peak",
        }
    }
}

impl fmt::Display for TouPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    /// Charging energy price, $/kWh per step.
    pub tou_price: Vec<f64>,
    pub tou_period: Vec<TouPeriod>,
    /// Upstream purchase price, $/MWh per step.
    pub lmp: Vec<f64>,
    /// Demand charge, $/kW of the maximum window-average power.
    pub demand_rate_per_kw: f64,
    pub demand_interval_minutes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    pub grid: TimeGrid,
    pub bases: PerUnitBases,
    pub nodes: Vec<PowerNode>,
    pub lines: Vec<PowerLine>,
    pub stations: Vec<ChargingStation>,
    pub coupling: Vec<CouplingLink>,
    pub roads: Vec<Road>,
    pub routes: Vec<Route>,
    pub bebs: Vec<Beb>,
    pub tariff: Tariff,
}

/// Lookup tables over an already validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioIndex {
    pub node_pos: BTreeMap<NodeId, usize>,
    pub line_pos: BTreeMap<LineId, usize>,
    pub station_pos: BTreeMap<StationId, usize>,
    pub route_pos: BTreeMap<RouteId, usize>,
    pub beb_pos: BTreeMap<BebId, usize>,
}

impl Scenario {
    pub fn index(&self) -> ScenarioIndex {
        fn positions<K: Ord + Copy, T>(items: &[T], key: impl Fn(&T) -> K) -> BTreeMap<K, usize> {
            items.iter().enumerate().map(|(i, it)| (key(it), i)).collect()
        }
        ScenarioIndex {
            node_pos: positions(&self.nodes, |n| n.id),
            line_pos: positions(&self.lines, |l| l.id),
            station_pos: positions(&self.stations, |s| s.id),
            route_pos: positions(&self.routes, |r| r.id),
            beb_pos: positions(&self.bebs, |b| b.id),
        }
    }

    pub fn station(&self, id: StationId) -> Option<&ChargingStation> {
        self.stations.iter().find(|s| s.id == id)
    }

    pub fn route(&self, id: RouteId) -> Option<&Route> {
        self.routes.iter().find(|r| r.id == id)
    }

    pub fn substation(&self) -> Option<&PowerNode> {
        self.nodes.iter().find(|n| n.is_substation)
    }

    /// Content hash of the canonical serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn counts(&self) -> ScenarioCounts {
        ScenarioCounts {
            nodes: self.nodes.len(),
            lines: self.lines.len(),
            stations: self.stations.len(),
            coupling_links: self.coupling.len(),
            roads: self.roads.len(),
            routes: self.routes.len(),
            bebs: self.bebs.len(),
            steps: self.grid.num_steps as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub nodes: usize,
    pub lines: usize,
    pub stations: usize,
    pub coupling_links: usize,
    pub roads: usize,
    pub routes: usize,
    pub bebs: usize,
    pub steps: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("scenario has dangling references:\n{0}")]
    DanglingReference(ValidationReport),
    #[error("scenario failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error("scenario counts {found:?} differ from the expected {expected:?}")]
    Counts { found: Box<ScenarioCounts>, expected: Box<ScenarioCounts> },
}

impl ScenarioError {
    pub fn report(&self) -> Option<&ValidationReport> {
        match self {
            ScenarioError::DanglingReference(r) | ScenarioError::Validation(r) => Some(r),
            _ => None,
        }
    }
}
