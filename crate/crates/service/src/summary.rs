use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use transitgrid_core::cost::{CostError, CostReport};
use transitgrid_core::powerflow::ViolationKind;
use transitgrid_core::scenario::{BebId, Scenario, StationId, TouPeriod};
use transitgrid_core::SnapshotStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEnergy {
    pub station: StationId,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocRange {
    pub beb: BebId,
    pub min_soc_kwh: f64,
    pub max_soc_kwh: f64,
}

/// Aggregates over one run, all recomputable from the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub scenario_name: String,
    pub scenario_fingerprint: String,
    pub policy: String,
    pub costs: CostReport,
    pub violation_counts: BTreeMap<ViolationKind, usize>,
    pub infeasible_at_zero_steps: usize,
    pub repaired_steps: usize,
    pub station_energy: Vec<StationEnergy>,
    pub beb_soc: Vec<SocRange>,
    /// BEB-steps charged under the peak emergency override.
    pub emergency_overrides: usize,
    /// BEB-steps whose state fell below `e_min`.
    pub energy_infeasible_steps: usize,
    pub total_charging_kwh: f64,
    pub peak_charging_kwh: f64,
}

impl HorizonSummary {
    pub fn compute(stream: &SnapshotStream, scenario: &Scenario) -> Result<Self, CostError> {
        let costs = CostReport::compute(stream, &scenario.tariff)?;
        let h = f64::from(stream.header.grid.step_minutes) / 60.0;
        let snaps = &stream.snapshots;

        let station_energy = scenario
            .stations
            .iter()
            .enumerate()
            .map(|(k, st)| StationEnergy {
                station: st.id,
                energy_kwh: snaps.iter().map(|s| s.stations[k].p_kw * h).sum(),
            })
            .collect();
        let beb_soc = scenario
            .bebs
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let socs = snaps.iter().map(|s| s.bebs[k].soc_kwh);
                SocRange {
                    beb: b.id,
                    min_soc_kwh: socs.clone().fold(f64::INFINITY, f64::min),
                    max_soc_kwh: socs.fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        let mut violation_counts = BTreeMap::new();
        for (kind, n) in stream.violation_counts() {
            violation_counts.insert(kind, n);
        }
        let bebs = || snaps.iter().flat_map(|s| &s.bebs);
        Ok(Self {
            scenario_name: stream.header.scenario_name.clone(),
            scenario_fingerprint: stream.header.scenario_fingerprint.clone(),
            policy: stream.header.policy.clone(),
            violation_counts,
            infeasible_at_zero_steps: snaps.iter().filter(|s| s.flags.infeasible_at_zero).count(),
            repaired_steps: snaps.iter().filter(|s| s.flags.repair_rounds > 0).count(),
            station_energy,
            beb_soc,
            emergency_overrides: bebs().filter(|b| b.emergency).count(),
            energy_infeasible_steps: bebs().filter(|b| b.energy_infeasible).count(),
            total_charging_kwh: snaps.iter().map(|s| s.total_station_kw() * h).sum(),
            peak_charging_kwh: snaps
                .iter()
                .filter(|s| s.prices.tou_period == TouPeriod::Peak)
                .map(|s| s.total_station_kw() * h)
                .sum(),
            costs,
        })
    }

    pub fn units() -> BTreeMap<&'static str, &'static str> {
        BTreeMap::from([
            ("costs.energy_cost_usd", "$"),
            ("costs.demand_charge_usd", "$"),
            ("costs.upstream_purchase_usd", "$"),
            ("costs.energy_cost_series", "$"),
            ("costs.upstream_cost_series", "$"),
            ("costs.demand_window_kw", "kW"),
            ("violation_counts", "count"),
            ("infeasible_at_zero_steps", "count"),
            ("repaired_steps", "count"),
            ("station_energy.energy_kwh", "kWh"),
            ("beb_soc.min_soc_kwh", "kWh"),
            ("beb_soc.max_soc_kwh", "kWh"),
            ("emergency_overrides", "count"),
            ("energy_infeasible_steps", "count"),
            ("total_charging_kwh", "kWh"),
            ("peak_charging_kwh", "kWh"),
        ])
    }
}
