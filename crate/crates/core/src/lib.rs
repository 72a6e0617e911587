//! Co-simulation of a battery-electric-bus (BEB) fleet and the radial
//! distribution feeder that powers its on-route chargers.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: static description of both networks, their coupling, the
//!   timetable, fleet and tariff, plus file ingestion and validation.
//! - [`powerflow`]: lossless linearized DistFlow on the radial feeder.
//! - [`transit`]: timetable-driven motion and battery state of the fleet.
//! - [`policy`]: TOU-aware charging decisions with feasibility repair.
//! - [`cost`]: energy, demand-charge and upstream purchase accounting.
//! - [`store`]: the per-step snapshot stream, queries and persistence.
//! - [`horizon`]: the 24-hour simulation loop tying everything together.

pub mod cost;
pub mod horizon;
pub mod policy;
pub mod powerflow;
pub mod scenario;
pub mod store;
pub mod transit;

pub use horizon::{run_horizon, HorizonError};
pub use policy::{ChargingPolicy, Naive, Opportunistic, PolicyKind};
pub use scenario::{load_scenario, validate_scenario, Scenario, ScenarioError};
pub use store::{Snapshot, SnapshotStream};
