//! The co-simulation loop: policy decision, feeder solve and fleet update
//! for every step of the horizon.

use crate::policy::{ChargingPolicy, CoupledGrid, PolicyError, StepPlan};
use crate::powerflow::PowerFlowError;
use crate::scenario::Scenario;
use crate::store::{
    BebRecord, LineRecord, NodeRecord, Prices, Snapshot, SnapshotStream, StationRecord, StepFlags, StreamHeader,
    RUN_FORMAT, RUN_FORMAT_VERSION,
};
use crate::transit::{step, FleetState, StepOutput, TransitError};

#[derive(Debug, thiserror::Error)]
pub enum HorizonError {
    #[error("cannot build the feeder model")]
    Feeder(#[source] PowerFlowError),
    #[error("simulation failed at step {t}")]
    Step {
        t: usize,
        #[source]
        source: PolicyError,
    },
}

impl HorizonError {
    /// Failing step, when the error is tied to one.
    pub fn step(&self) -> Option<usize> {
        match self {
            HorizonError::Step { t, .. } => Some(*t),
            HorizonError::Feeder(_) => None,
        }
    }
}

/// Simulate the whole horizon of `s` under `policy`.
pub fn run_horizon(s: &Scenario, policy: &dyn ChargingPolicy) -> Result<SnapshotStream, HorizonError> {
    let grid = CoupledGrid::new(s).map_err(HorizonError::Feeder)?;
    let at = |t: usize| move |e: TransitError| HorizonError::Step { t, source: e.into() };
    let mut fs = FleetState::initial(s).map_err(at(0))?;
    let mut snapshots = Vec::with_capacity(s.grid.len());
    for t in 0..s.grid.len() {
        let plan = policy.decide(&grid, &fs).map_err(|source| HorizonError::Step { t, source })?;
        let out = step(&fs, s, &plan.decisions).map_err(at(t))?;
        snapshots.push(snapshot(s, &grid, &plan, &out));
        fs = out.next;
    }
    Ok(SnapshotStream {
        header: StreamHeader {
            format: RUN_FORMAT.to_string(),
            format_version: RUN_FORMAT_VERSION,
            scenario_name: s.name.clone(),
            scenario_fingerprint: s.fingerprint(),
            policy: policy.name().to_string(),
            grid: s.grid,
            bases: s.bases,
        },
        snapshots,
    })
}

fn snapshot(s: &Scenario, grid: &CoupledGrid<'_>, plan: &StepPlan, out: &StepOutput) -> Snapshot {
    let t = out.current.t;
    let k = s.bases.kw_per_pu();
    let occupancy = out.current.occupancy(s);
    let stations: Vec<StationRecord> = s
        .stations
        .iter()
        .zip(&plan.station_kw)
        .zip(occupancy)
        .map(|((st, &p_kw), n)| StationRecord {
            id: st.id,
            p_kw,
            q_kvar: p_kw * st.reactive_per_kw(),
            n_bebs_present: n,
        })
        .collect();
    let nodes = s
        .nodes
        .iter()
        .zip(&plan.flow.v_sq)
        .map(|(node, v_sq)| {
            let (mut p, mut q) = (node.inflexible_p_kw[t], node.inflexible_q_kvar[t]);
            for (st, rec) in s.stations.iter().zip(&stations) {
                if st.linked_node == node.id {
                    p += rec.p_kw;
                    q += rec.q_kvar;
                }
            }
            NodeRecord { id: node.id, v_pu: v_sq.sqrt(), p_load_kw: p, q_load_kvar: q }
        })
        .collect();
    let lines = s
        .lines
        .iter()
        .enumerate()
        .map(|(j, line)| LineRecord {
            id: line.id,
            p_kw: plan.flow.p_flow[j] * k,
            q_kvar: plan.flow.q_flow[j] * k,
            i_pu: plan.flow.i[j],
        })
        .collect();
    let bebs = out
        .current
        .bebs
        .iter()
        .zip(&out.energy)
        .map(|(b, e)| BebRecord {
            id: b.beb_id,
            soc_kwh: b.soc_kwh,
            velocity_mph: b.velocity_mph,
            location: b.location,
            charging_kw: b.charging_kw,
            charge_kwh: e.charge_kwh,
            discharge_kwh: e.discharge_kwh,
            last_station: b.last_station,
            next_station: b.next_station,
            emergency: plan.emergency.contains(&b.beb_id),
            energy_infeasible: b.energy_infeasible,
        })
        .collect();
    let (sub_p, sub_q) = grid.feeder.substation_power(&plan.flow, &s.bases);
    Snapshot {
        t,
        clock: s.grid.clock(t).expect("step inside horizon").to_string(),
        nodes,
        lines,
        stations,
        bebs,
        substation_p_kw: sub_p,
        substation_q_kvar: sub_q,
        prices: Prices {
            tou_usd_per_kwh: s.tariff.tou_price[t],
            tou_period: s.tariff.tou_period[t],
            lmp_usd_per_mwh: s.tariff.lmp[t],
        },
        flags: StepFlags {
            violations: plan.violations.clone(),
            infeasible_at_zero: plan.infeasible_at_zero,
            repair_rounds: plan.repair_rounds,
        },
    }
}
