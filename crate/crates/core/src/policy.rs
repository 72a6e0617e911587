//! Charging decisions for parked BEBs.
//!
//! Both policies share one greedy procedure. Eligible BEBs are visited in
//! ascending SOC order (BEB id breaks ties). Each one is offered
//! `min(rating, headroom, station residual)`, where headroom is the power
//! that would fill the battery to `e_max` over the dwell. The opportunistic
//! policy skips peak steps unless a BEB would otherwise reach its next
//! charger below `e_min`; it then gets the minimum power that prevents this
//! and is flagged as an emergency.
//!
//! The proposal is then checked against the feeder. While limits are
//! violated, proposals at stations electrically upstream of a violation
//! are cut by 10% of their original value, for at most ten rounds, after
//! which the affected stations are switched off.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::powerflow::{check_limits, Feeder, FlowSolution, GridComponent, NodalLoad, PowerFlowError, ViolationList};
use crate::scenario::{BebId, NodeId, Scenario, StationId, TouPeriod};
use crate::transit::{chargeable, miles_to_next_charger, activity, FleetState, TransitError};

/// Power assigned to one parked BEB for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeDecision {
    pub beb_id: BebId,
    pub station_id: StationId,
    pub power_kw: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Transit(#[from] TransitError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// Output of a policy for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub decisions: Vec<ChargeDecision>,
    /// BEBs charged at peak under the emergency override.
    pub emergency: Vec<BebId>,
    /// Inflexible load alone already breaks a limit at this step.
    pub infeasible_at_zero: bool,
    /// Limit breaches of the accepted plan.
    pub violations: ViolationList,
    pub repair_rounds: u32,
    /// Feeder solution with the accepted plan injected.
    pub flow: FlowSolution,
    /// Accepted charging power per station, station order.
    pub station_kw: Vec<f64>,
}

/// Scenario plus the per-step data every policy evaluation needs.
pub struct CoupledGrid<'a> {
    pub scenario: &'a Scenario,
    pub feeder: Feeder,
    station_slot: Vec<Option<usize>>,
    /// First feeder line on the path to each station's node.
    station_branch: Vec<Option<usize>>,
    station_paths: Vec<Vec<usize>>,
    inflexible: Vec<NodalLoad>,
}

impl<'a> CoupledGrid<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, PowerFlowError> {
        let feeder = Feeder::new(scenario)?;
        let node_pos = |id: NodeId| scenario.nodes.iter().position(|n| n.id == id).expect("validated node");
        let mut station_slot = Vec::new();
        let mut station_paths = Vec::new();
        for st in &scenario.stations {
            let pos = node_pos(st.linked_node);
            station_slot.push(feeder.load_slot(pos));
            station_paths.push(feeder.path_lines(pos));
        }
        let station_branch = station_paths.iter().map(|p| p.first().copied()).collect();
        let non_root: Vec<usize> = (0..scenario.nodes.len()).filter(|&i| i != feeder.root()).collect();
        let inflexible = (0..scenario.grid.len())
            .map(|t| {
                let p: Vec<f64> = non_root.iter().map(|&i| scenario.nodes[i].inflexible_p_kw[t]).collect();
                let q: Vec<f64> = non_root.iter().map(|&i| scenario.nodes[i].inflexible_q_kvar[t]).collect();
                NodalLoad::from_kw(&scenario.bases, &p, &q)
            })
            .collect();
        Ok(Self { scenario, feeder, station_slot, station_branch, station_paths, inflexible })
    }

    /// Per-unit nodal load at `t` with `station_kw` injected at linked nodes.
    pub fn loads(&self, t: usize, station_kw: &[f64]) -> NodalLoad {
        let mut loads = self.inflexible[t].clone();
        let k = self.scenario.bases.kw_per_pu();
        for ((st, slot), &kw) in self.scenario.stations.iter().zip(&self.station_slot).zip(station_kw) {
            if let Some(slot) = *slot {
                loads.p[slot] += kw / k;
                loads.q[slot] += kw * st.reactive_per_kw() / k;
            }
        }
        loads
    }

    pub fn solve(&self, t: usize, station_kw: &[f64]) -> Result<FlowSolution, PowerFlowError> {
        self.feeder.solve(&self.loads(t, station_kw))
    }

    /// Whether charging at `station` changes the quantity a violation is about.
    fn station_affects(&self, station: usize, component: GridComponent) -> bool {
        match component {
            GridComponent::Line(id) => {
                let line = self.scenario.lines.iter().position(|l| l.id == id).expect("validated line");
                self.station_paths[station].contains(&line)
            }
            GridComponent::Node(id) => {
                let pos = self.scenario.nodes.iter().position(|n| n.id == id).expect("validated node");
                let first = self.feeder.path_lines(pos).first().copied();
                first.is_some() && first == self.station_branch[station]
            }
        }
    }
}

pub trait ChargingPolicy {
    fn name(&self) -> &'static str;
    fn decide(&self, grid: &CoupledGrid<'_>, fs: &FleetState) -> Result<StepPlan, PolicyError>;
}

/// Charges during off-peak and mid-peak only, except for emergencies.
#[derive(Debug, Clone, Copy, Default)]
pub struct Opportunistic;

/// Charges every parked BEB at maximum feasible power at all times.
#[derive(Debug, Clone, Copy, Default)]
pub struct Naive;

impl ChargingPolicy for Opportunistic {
    fn name(&self) -> &'static str {
        "opportunistic"
    }

    fn decide(&self, grid: &CoupledGrid<'_>, fs: &FleetState) -> Result<StepPlan, PolicyError> {
        greedy(grid, fs, true)
    }
}

impl ChargingPolicy for Naive {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn decide(&self, grid: &CoupledGrid<'_>, fs: &FleetState) -> Result<StepPlan, PolicyError> {
        greedy(grid, fs, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Opportunistic,
    Naive,
}

impl PolicyKind {
    pub fn policy(self) -> &'static dyn ChargingPolicy {
        match self {
            PolicyKind::Opportunistic => &Opportunistic,
            PolicyKind::Naive => &Naive,
        }
    }

    pub fn name(self) -> &'static str {
        self.policy().name()
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "opportunistic" => Ok(PolicyKind::Opportunistic),
            "naive" => Ok(PolicyKind::Naive),
            other => Err(format!("unknown policy {other:?}; expected opportunistic or naive")),
        }
    }
}

/// TOU period of step `t` as labelled by the tariff.
pub fn tou_period(t: usize, scenario: &Scenario) -> TouPeriod {
    scenario.tariff.tou_period[t]
}

pub fn decide_charges(grid: &CoupledGrid<'_>, fs: &FleetState) -> Result<StepPlan, PolicyError> {
    Opportunistic.decide(grid, fs)
}

pub fn naive_policy(grid: &CoupledGrid<'_>, fs: &FleetState) -> Result<StepPlan, PolicyError> {
    Naive.decide(grid, fs)
}

struct Proposal {
    beb: usize,
    station: usize,
    power_kw: f64,
    emergency: bool,
}

pub const MAX_REPAIR_ROUNDS: u32 = 10;

fn greedy(grid: &CoupledGrid<'_>, fs: &FleetState, respect_peak: bool) -> Result<StepPlan, PolicyError> {
    let s = grid.scenario;
    let t = fs.t;
    let peak = tou_period(t, s) == TouPeriod::Peak;

    let mut eligible = chargeable(s, fs)?;
    eligible.sort_by(|a, b| {
        let (sa, sb) = (&fs.bebs[a.0], &fs.bebs[b.0]);
        sa.soc_kwh.total_cmp(&sb.soc_kwh).then(sa.beb_id.cmp(&sb.beb_id))
    });

    let mut residual: Vec<f64> = s.stations.iter().map(|st| st.capacity_kw()).collect();
    let mut free_chargers: Vec<u32> = s.stations.iter().map(|st| st.n_chargers).collect();
    let mut proposals = Vec::new();
    for (k, station_id, minutes) in eligible {
        let beb = &s.bebs[k];
        let soc = fs.bebs[k].soc_kwh;
        let sp = s.stations.iter().position(|st| st.id == station_id).expect("validated station");
        if free_chargers[sp] == 0 {
            continue;
        }
        let headroom_kw = (beb.e_max_kwh - soc) * 60.0 / minutes;
        if headroom_kw <= 0.0 {
            continue;
        }
        let mut want = headroom_kw;
        let mut emergency = false;
        if respect_peak && peak {
            let route = s.route(beb.route_id).expect("validated route");
            let stop = activity(beb, route, &s.grid, t)?.stop_index.expect("dwelling BEB has a stop");
            let need = miles_to_next_charger(route, stop).unwrap_or(0.0) * beb.consumption_kwh_per_mile;
            let projected = soc - need;
            if projected >= beb.e_min_kwh {
                continue;
            }
            want = want.min((beb.e_min_kwh - projected) * 60.0 / minutes);
            emergency = true;
        }
        let power = want.min(s.stations[sp].charger_rating_kw).min(residual[sp]);
        if power <= 0.0 {
            continue;
        }
        residual[sp] -= power;
        free_chargers[sp] -= 1;
        proposals.push(Proposal { beb: k, station: sp, power_kw: power, emergency });
    }

    let zero = vec![0.0; s.stations.len()];
    let baseline = grid.solve(t, &zero)?;
    let infeasible_at_zero = !check_limits(&baseline, s, t).is_empty();

    // Cut level per station: proposals run at (10 - level) / 10 of their original power.
    let mut level = vec![0u32; s.stations.len()];
    let mut rounds = 0;
    loop {
        let factor = |sp: usize| cut_factor(level[sp]);
        let mut station_kw = zero.clone();
        for p in &proposals {
            station_kw[p.station] += p.power_kw * factor(p.station);
        }
        let candidate = match grid.solve(t, &station_kw) {
            Ok(sol) => Ok(check_limits(&sol, s, t)),
            Err(PowerFlowError::ModelBreakdown { node, v_sq }) => Err((node, v_sq)),
            Err(e) => return Err(e.into()),
        };
        let affected: Vec<usize> = (0..s.stations.len())
            .filter(|&sp| station_kw[sp] > 0.0)
            .filter(|&sp| match &candidate {
                Ok(violations) => violations.iter().any(|v| grid.station_affects(sp, v.component)),
                Err((node, _)) => grid.station_affects(sp, GridComponent::Node(*node)),
            })
            .collect();
        if affected.is_empty() {
            match candidate {
                Ok(_) => break,
                Err((node, v_sq)) => return Err(PowerFlowError::ModelBreakdown { node, v_sq }.into()),
            }
        }
        if rounds < MAX_REPAIR_ROUNDS {
            for &sp in &affected {
                level[sp] = (level[sp] + 1).min(MAX_REPAIR_ROUNDS);
            }
        } else {
            for &sp in &affected {
                level[sp] = MAX_REPAIR_ROUNDS;
            }
        }
        rounds += 1;
    }

    let mut decisions = Vec::new();
    let mut emergency = Vec::new();
    for p in &proposals {
        let power = p.power_kw * cut_factor(level[p.station]);
        if power > 0.0 {
            let beb_id = s.bebs[p.beb].id;
            decisions.push(ChargeDecision { beb_id, station_id: s.stations[p.station].id, power_kw: power });
            if p.emergency {
                emergency.push(beb_id);
            }
        }
    }
    // Final totals are summed in BEB order, matching what the snapshot reports.
    decisions.sort_by_key(|d| d.beb_id);
    emergency.sort();
    let mut station_kw = zero;
    for d in &decisions {
        let sp = s.stations.iter().position(|st| st.id == d.station_id).expect("validated station");
        station_kw[sp] += d.power_kw;
    }
    let flow = grid.solve(t, &station_kw)?;
    let violations = check_limits(&flow, s, t);
    Ok(StepPlan { decisions, emergency, infeasible_at_zero, violations, repair_rounds: rounds, flow, station_kw })
}

fn cut_factor(level: u32) -> f64 {
    f64::from(MAX_REPAIR_ROUNDS - level) / f64::from(MAX_REPAIR_ROUNDS)
}
