//! Timetable-driven motion and battery state of the BEB fleet.
//!
//! A BEB with offset `o` at horizon step `t` sits at route time `t + o`.
//! Between scheduled stops it moves at the constant speed that keeps the
//! timetable; energy drawn on the road is `consumption * miles`, energy
//! gained at a charger is `power * minutes / 60`, capped at `e_max`.

use serde::{Deserialize, Serialize};

use crate::policy::ChargeDecision;
use crate::scenario::{Beb, BebId, Route, RouteId, Scenario, StationId, TimeGrid};

/// Slack below `e_min` attributed to rounding rather than a real deficit.
pub const SOC_TOLERANCE_KWH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransitError {
    #[error("{beb}: timetable of route {} has no activity at route step {route_step}", .route.0)]
    TimetableGap { beb: BebId, route: RouteId, route_step: f64 },
    #[error("{0}: unknown route")]
    UnknownRoute(BebId),
    #[error("negative distance {0} miles")]
    NegativeDistance(f64),
    #[error("negative charging power {power_kw} kW or duration {minutes} min")]
    NegativeCharge { power_kw: f64, minutes: f64 },
    #[error("decision for {0}, which is not dwelling at a charger")]
    NotAtCharger(BebId),
    #[error("decision for {beb} names station {}, but the BEB is elsewhere", .station.0)]
    WrongStation { beb: BebId, station: StationId },
    #[error("decision for {0}, which is not in the fleet")]
    UnknownBeb(BebId),
    #[error("more than one decision for {0}")]
    DuplicateDecision(BebId),
    #[error("decision of {power_kw} kW for {beb} exceeds charger rating {rating_kw} kW")]
    OverRating { beb: BebId, power_kw: f64, rating_kw: f64 },
    #[error("station {} receives {total_kw} kW, above its {capacity_kw} kW capacity", .station.0)]
    StationOverCapacity { station: StationId, total_kw: f64, capacity_kw: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    /// Dwelling at a stop; `stop_id` is the station id when `charger` is set.
    AtStation { stop_id: u32, charger: bool },
    /// Between stops `segment` and `segment + 1` of the route.
    OnRoad { route: RouteId, segment: u32, fraction: f64 },
}

impl Location {
    pub fn station(&self) -> Option<StationId> {
        match *self {
            Location::AtStation { stop_id, charger: true } => Some(StationId(stop_id)),
            _ => None,
        }
    }

    pub fn is_on_road(&self) -> bool {
        matches!(self, Location::OnRoad { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub location: Location,
    pub velocity_mph: f64,
    /// Most recent and upcoming charger stations along the route.
    pub last_station: Option<StationId>,
    pub next_station: Option<StationId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BebState {
    pub beb_id: BebId,
    pub soc_kwh: f64,
    pub location: Location,
    pub velocity_mph: f64,
    /// Power drawn during this step; zero until a decision is applied.
    pub charging_kw: f64,
    pub last_station: Option<StationId>,
    pub next_station: Option<StationId>,
    /// Set when `soc_kwh` is below the BEB's `e_min`.
    pub energy_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState {
    pub t: usize,
    pub bebs: Vec<BebState>,
}

/// Energy moved during one step, per BEB.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEnergy {
    pub charge_kwh: f64,
    pub discharge_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// The state at `t` with the applied charging powers filled in.
    pub current: FleetState,
    pub energy: Vec<StepEnergy>,
    /// The state at `t + 1`.
    pub next: FleetState,
}

/// What a BEB does over the interval `[t, t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepActivity {
    pub miles: f64,
    /// Minutes spent dwelling at a charger station, and which one.
    pub charger_dwell: Option<(StationId, f64)>,
    /// Index of the stop the BEB dwells at, if any.
    pub stop_index: Option<usize>,
}

fn route_time(beb: &Beb, t: f64) -> f64 {
    f64::from(beb.offset_steps) + t
}

/// Index of the last stop whose arrival is at or before `tau`.
fn stop_at_or_before(route: &Route, tau: f64) -> Option<usize> {
    let k = route.stops.partition_point(|s| f64::from(s.arrival) <= tau);
    k.checked_sub(1)
}

fn last_charger_up_to(route: &Route, k: usize) -> Option<StationId> {
    route.stops[..=k].iter().rev().find_map(|s| s.station())
}

fn next_charger_from(route: &Route, k: usize) -> Option<StationId> {
    route.stops.get(k..)?.iter().find_map(|s| s.station())
}

fn gap(beb: &Beb, route: &Route, tau: f64) -> TransitError {
    TransitError::TimetableGap { beb: beb.id, route: route.id, route_step: tau }
}

/// Where the timetable puts `beb` at horizon step `t`.
pub fn position_of(beb: &Beb, route: &Route, grid: &TimeGrid, t: usize) -> Result<Position, TransitError> {
    position_at(beb, route, grid, t as f64)
}

fn position_at(beb: &Beb, route: &Route, grid: &TimeGrid, t: f64) -> Result<Position, TransitError> {
    let tau = route_time(beb, t);
    let k = stop_at_or_before(route, tau).ok_or_else(|| gap(beb, route, tau))?;
    let stop = &route.stops[k];
    if tau <= f64::from(stop.departure) {
        return Ok(Position {
            location: Location::AtStation { stop_id: stop.stop_id, charger: stop.has_charger },
            velocity_mph: 0.0,
            last_station: last_charger_up_to(route, k),
            next_station: next_charger_from(route, k + 1),
        });
    }
    let next = route.stops.get(k + 1).ok_or_else(|| gap(beb, route, tau))?;
    let (dep, arr) = (f64::from(stop.departure), f64::from(next.arrival));
    let hours = (arr - dep) * grid.step_hours();
    Ok(Position {
        location: Location::OnRoad { route: route.id, segment: k as u32, fraction: (tau - dep) / (arr - dep) },
        velocity_mph: route.segment_miles[k] / hours,
        last_station: last_charger_up_to(route, k),
        next_station: next_charger_from(route, k + 1),
    })
}

/// Miles travelled and charger dwell over `[t, t + 1)`. A step that mixes
/// travel and dwell is split by scheduled time.
pub fn activity(beb: &Beb, route: &Route, grid: &TimeGrid, t: usize) -> Result<StepActivity, TransitError> {
    let (a, b) = (route_time(beb, t as f64), route_time(beb, t as f64 + 1.0));
    let first = stop_at_or_before(route, a).ok_or_else(|| gap(beb, route, a))?;
    let last = route.stops.last().expect("validated route has stops");
    if f64::from(last.departure) < b {
        return Err(gap(beb, route, b));
    }
    let mut out = StepActivity::default();
    let mut best_dwell = 0.0;
    for k in first..route.stops.len() {
        let stop = &route.stops[k];
        if f64::from(stop.arrival) >= b {
            break;
        }
        let dwell = overlap(a, b, f64::from(stop.arrival), f64::from(stop.departure));
        if dwell > best_dwell {
            best_dwell = dwell;
            out.stop_index = Some(k);
            out.charger_dwell = stop.station().map(|s| (s, dwell * f64::from(grid.step_minutes)));
        }
        if let Some(next) = route.stops.get(k + 1) {
            let (dep, arr) = (f64::from(stop.departure), f64::from(next.arrival));
            let travel = overlap(a, b, dep, arr);
            if travel > 0.0 {
                out.miles += route.segment_miles[k] * travel / (arr - dep);
            }
        }
    }
    Ok(out)
}

fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

/// Miles from the departure of stop `k` to the arrival at the next charger
/// stop after it; `None` when no charger follows.
pub fn miles_to_next_charger(route: &Route, k: usize) -> Option<f64> {
    let mut miles = 0.0;
    for j in k..route.segment_miles.len() {
        miles += route.segment_miles[j];
        if route.stops[j + 1].has_charger {
            return Some(miles);
        }
    }
    None
}

pub fn discharge_energy(beb: &Beb, miles: f64) -> Result<f64, TransitError> {
    if miles < 0.0 {
        return Err(TransitError::NegativeDistance(miles));
    }
    Ok(beb.consumption_kwh_per_mile * miles)
}

/// Battery energy after charging at `power_kw` for `minutes`, capped at `e_max`.
pub fn apply_charge(soc: f64, power_kw: f64, minutes: f64, beb: &Beb) -> Result<f64, TransitError> {
    if power_kw < 0.0 || minutes < 0.0 {
        return Err(TransitError::NegativeCharge { power_kw, minutes });
    }
    if power_kw == 0.0 || minutes == 0.0 {
        return Ok(soc);
    }
    Ok((soc + power_kw * minutes / 60.0).min(beb.e_max_kwh))
}

fn route_for<'a>(s: &'a Scenario, beb: &Beb) -> Result<&'a Route, TransitError> {
    s.route(beb.route_id).ok_or(TransitError::UnknownRoute(beb.id))
}

fn state_at(s: &Scenario, beb: &Beb, t: usize, soc: f64) -> Result<BebState, TransitError> {
    let pos = position_of(beb, route_for(s, beb)?, &s.grid, t)?;
    Ok(BebState {
        beb_id: beb.id,
        soc_kwh: soc,
        location: pos.location,
        velocity_mph: pos.velocity_mph,
        charging_kw: 0.0,
        last_station: pos.last_station,
        next_station: pos.next_station,
        energy_infeasible: soc < beb.e_min_kwh - SOC_TOLERANCE_KWH,
    })
}

impl FleetState {
    pub fn initial(s: &Scenario) -> Result<Self, TransitError> {
        let bebs = s.bebs.iter().map(|b| state_at(s, b, 0, b.soc0_kwh)).collect::<Result<_, _>>()?;
        Ok(Self { t: 0, bebs })
    }

    /// Fleet at step `t` with the given energies, in BEB order.
    pub fn at(s: &Scenario, t: usize, soc_kwh: &[f64]) -> Result<Self, TransitError> {
        let bebs = s.bebs.iter().zip(soc_kwh).map(|(b, &soc)| state_at(s, b, t, soc)).collect::<Result<_, _>>()?;
        Ok(Self { t, bebs })
    }

    /// BEBs parked at each station, in station order.
    pub fn occupancy(&self, s: &Scenario) -> Vec<u32> {
        s.stations
            .iter()
            .map(|st| self.bebs.iter().filter(|b| b.location.station() == Some(st.id)).count() as u32)
            .collect()
    }
}

/// BEBs that may receive a charging decision at `t`: parked at a charger
/// station and dwelling there during the step.
pub fn chargeable(s: &Scenario, fs: &FleetState) -> Result<Vec<(usize, StationId, f64)>, TransitError> {
    let mut out = Vec::new();
    for (k, (beb, state)) in s.bebs.iter().zip(&fs.bebs).enumerate() {
        let Some(station) = state.location.station() else { continue };
        let act = activity(beb, route_for(s, beb)?, &s.grid, fs.t)?;
        if let Some((dwell_station, minutes)) = act.charger_dwell {
            if dwell_station == station && minutes > 0.0 {
                out.push((k, station, minutes));
            }
        }
    }
    Ok(out)
}

/// Advance the fleet from `t` to `t + 1` under `decisions`.
///
/// Falling below `e_min` does not stop the simulation; the BEB's
/// `energy_infeasible` flag is raised in the resulting state instead.
pub fn step(fs: &FleetState, s: &Scenario, decisions: &[ChargeDecision]) -> Result<StepOutput, TransitError> {
    let mut power = vec![None; s.bebs.len()];
    let mut station_totals = vec![0.0; s.stations.len()];
    let dwell = chargeable(s, fs)?;
    for d in decisions {
        let k = s.bebs.iter().position(|b| b.id == d.beb_id).ok_or(TransitError::UnknownBeb(d.beb_id))?;
        if power[k].is_some() {
            return Err(TransitError::DuplicateDecision(d.beb_id));
        }
        let Some(&(_, station, _)) = dwell.iter().find(|(i, _, _)| *i == k) else {
            return Err(TransitError::NotAtCharger(d.beb_id));
        };
        if station != d.station_id {
            return Err(TransitError::WrongStation { beb: d.beb_id, station: d.station_id });
        }
        let sp = s.stations.iter().position(|st| st.id == station).expect("validated station");
        let rating = s.stations[sp].charger_rating_kw;
        if d.power_kw < 0.0 || d.power_kw > rating {
            return Err(TransitError::OverRating { beb: d.beb_id, power_kw: d.power_kw, rating_kw: rating });
        }
        station_totals[sp] += d.power_kw;
        power[k] = Some(d.power_kw);
    }
    for (st, &total) in s.stations.iter().zip(&station_totals) {
        if total > st.capacity_kw() * (1.0 + 1e-12) {
            return Err(TransitError::StationOverCapacity { station: st.id, total_kw: total, capacity_kw: st.capacity_kw() });
        }
    }

    let mut current = fs.clone();
    let mut energy = Vec::with_capacity(s.bebs.len());
    let mut next = Vec::with_capacity(s.bebs.len());
    for (k, beb) in s.bebs.iter().enumerate() {
        let route = route_for(s, beb)?;
        let state = &mut current.bebs[k];
        let act = activity(beb, route, &s.grid, fs.t)?;
        let p = power[k].unwrap_or(0.0);
        state.charging_kw = p;
        let minutes = act.charger_dwell.map_or(0.0, |(_, m)| m);
        let charged = apply_charge(state.soc_kwh, p, minutes, beb)?;
        let mut e = StepEnergy { charge_kwh: charged - state.soc_kwh, discharge_kwh: discharge_energy(beb, act.miles)? };
        let soc = state.soc_kwh + e.charge_kwh - e.discharge_kwh;
        // Record the realized difference so the balance holds bit for bit.
        if e.discharge_kwh == 0.0 {
            e.charge_kwh = soc - state.soc_kwh;
        } else if e.charge_kwh == 0.0 {
            e.discharge_kwh = state.soc_kwh - soc;
        }
        energy.push(e);
        next.push(state_at(s, beb, fs.t + 1, soc)?);
    }
    Ok(StepOutput { current, energy, next: FleetState { t: fs.t + 1, bebs: next } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{StopVisit, TimeGrid};

    fn beb(offset: u32) -> Beb {
        Beb {
            id: BebId(1),
            route_id: RouteId(1),
            offset_steps: offset,
            capacity_kwh: 200.0,
            e_min_kwh: 40.0,
            e_max_kwh: 190.0,
            soc0_kwh: 150.0,
            consumption_kwh_per_mile: 2.0,
        }
    }

    fn stop(id: u32, arrival: u32, departure: u32) -> StopVisit {
        StopVisit { stop_id: id, has_charger: true, arrival, departure }
    }

    /// 1 --6 mi / 6 steps--> 2 --3 mi / 1 step--> 3 --15.5 mi / 12 steps--> 1
    fn route() -> Route {
        Route {
            id: RouteId(1),
            stops: vec![stop(1, 0, 2), stop(2, 8, 9), stop(3, 10, 12), stop(1, 24, 26)],
            segment_miles: vec![6.0, 3.0, 15.5],
        }
    }

    #[test]
    fn at_station_on_arrival() {
        let p = position_of(&beb(0), &route(), &TimeGrid::default(), 8).unwrap();
        assert_eq!(p.location, Location::AtStation { stop_id: 2, charger: true });
        assert_eq!(p.velocity_mph, 0.0);
        assert_eq!(p.last_station, Some(StationId(2)));
        assert_eq!(p.next_station, Some(StationId(3)));
    }

    #[test]
    fn midpoint_of_six_mile_segment() {
        let p = position_of(&beb(0), &route(), &TimeGrid::default(), 5).unwrap();
        assert_eq!(p.location, Location::OnRoad { route: RouteId(1), segment: 0, fraction: 0.5 });
        assert_eq!(p.velocity_mph, 12.0);
        assert_eq!((p.last_station, p.next_station), (Some(StationId(1)), Some(StationId(2))));
    }

    #[test]
    fn long_segment_speed_is_constant() {
        let g = TimeGrid::default();
        for t in 13..24 {
            let p = position_of(&beb(0), &route(), &g, t).unwrap();
            assert!(p.location.is_on_road());
            assert!((p.velocity_mph - 15.5).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_shifts_timetable() {
        let g = TimeGrid::default();
        assert_eq!(position_of(&beb(3), &route(), &g, 2).unwrap(), position_of(&beb(0), &route(), &g, 5).unwrap());
    }

    #[test]
    fn gap_outside_timetable() {
        let err = position_of(&beb(0), &route(), &TimeGrid::default(), 27).unwrap_err();
        assert!(matches!(err, TransitError::TimetableGap { .. }));
    }

    #[test]
    fn discharge_cases() {
        let b = beb(0);
        assert_eq!(discharge_energy(&b, 3.0).unwrap(), 6.0);
        assert_eq!(discharge_energy(&b, 0.0).unwrap(), 0.0);
        assert_eq!(discharge_energy(&b, 15.5).unwrap(), 31.0);
        assert!(discharge_energy(&b, -1.0).is_err());
    }

    #[test]
    fn charge_cases() {
        let b = beb(0);
        assert!((apply_charge(100.0, 500.0, 5.0, &b).unwrap() - (100.0 + 125.0 / 3.0)).abs() < 1e-12);
        assert!((apply_charge(100.0, 500.0, 10.0, &b).unwrap() - (100.0 + 250.0 / 3.0)).abs() < 1e-12);
        assert_eq!(apply_charge(150.0, 500.0, 10.0, &b).unwrap(), 190.0);
        assert_eq!(apply_charge(123.4, 0.0, 10.0, &b).unwrap(), 123.4);
        assert!(apply_charge(100.0, -1.0, 5.0, &b).is_err());
        assert!(apply_charge(100.0, 1.0, -5.0, &b).is_err());
    }

    #[test]
    fn activity_splits_travel_and_dwell() {
        let g = TimeGrid::default();
        let r = route();
        let full_hop = activity(&beb(0), &r, &g, 9).unwrap();
        assert_eq!(full_hop.miles, 3.0);
        assert_eq!(full_hop.charger_dwell, None);
        let dwell = activity(&beb(0), &r, &g, 8).unwrap();
        assert_eq!(dwell.miles, 0.0);
        assert_eq!(dwell.charger_dwell, Some((StationId(2), 5.0)));
        assert_eq!(activity(&beb(0), &r, &g, 3).unwrap().miles, 1.0);
    }

    #[test]
    fn miles_to_next_charger_skips_plain_stops() {
        let mut r = route();
        r.stops[1].has_charger = false;
        r.stops[1].stop_id = 99;
        assert_eq!(miles_to_next_charger(&r, 0), Some(9.0));
        assert_eq!(miles_to_next_charger(&r, 2), Some(15.5));
        assert_eq!(miles_to_next_charger(&r, 3), None);
    }
}
