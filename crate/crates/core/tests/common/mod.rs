#![allow(dead_code)]

use std::path::PathBuf;

use transitgrid_core::scenario::parkcity::tou_price;
use transitgrid_core::scenario::*;

pub fn bundled_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/parkcity33.scenario")
}

pub fn tariff_for(grid: &TimeGrid) -> Tariff {
    let periods: Vec<TouPeriod> = (0..grid.len()).map(|t| grid.tou_period(t).unwrap()).collect();
    Tariff {
        tou_price: periods.iter().map(|&p| tou_price(p)).collect(),
        tou_period: periods,
        lmp: vec![40.0; grid.len()],
        demand_rate_per_kw: 15.0,
        demand_interval_minutes: 15,
    }
}

/// Two nodes, one station, one BEB shuttling between the station and a
/// plain stop 3 miles away.
pub fn minimal() -> Scenario {
    let grid = TimeGrid::default();
    let n = grid.len();
    let mut stops = Vec::new();
    let mut miles = Vec::new();
    let mut t = 0;
    while stops.last().is_none_or(|s: &StopVisit| (s.departure as usize) < n + 2) {
        stops.push(StopVisit { stop_id: 1, has_charger: true, arrival: t, departure: t + 1 });
        stops.push(StopVisit { stop_id: 100, has_charger: false, arrival: t + 4, departure: t + 4 });
        miles.extend([3.0, 3.0]);
        t += 7;
    }
    stops.pop();
    miles.truncate(stops.len() - 1);
    Scenario {
        format_version: SCENARIO_FORMAT_VERSION,
        name: "minimal".into(),
        grid,
        bases: PerUnitBases::default(),
        nodes: vec![
            PowerNode {
                id: NodeId(1),
                is_substation: true,
                v_min: 0.95,
                v_max: 1.05,
                angle_deg: None,
                inflexible_p_kw: vec![0.0; n],
                inflexible_q_kvar: vec![0.0; n],
            },
            PowerNode {
                id: NodeId(2),
                is_substation: false,
                v_min: 0.95,
                v_max: 1.05,
                angle_deg: None,
                inflexible_p_kw: vec![100.0; n],
                inflexible_q_kvar: vec![50.0; n],
            },
        ],
        lines: vec![PowerLine {
            id: LineId(1),
            from_node: NodeId(1),
            to_node: NodeId(2),
            r_pu: 0.01,
            x_pu: 0.01,
            i_max_pu: 1.0,
        }],
        stations: vec![ChargingStation {
            id: StationId(1),
            name: "Depot".into(),
            linked_node: NodeId(2),
            charger_rating_kw: 500.0,
            n_chargers: 1,
            power_factor: 0.98,
            layout_xy: [0.0, 0.0],
        }],
        coupling: vec![CouplingLink { station_id: StationId(1), node_id: NodeId(2) }],
        roads: vec![],
        routes: vec![Route { id: RouteId(1), stops, segment_miles: miles }],
        bebs: vec![Beb {
            id: BebId(1),
            route_id: RouteId(1),
            offset_steps: 0,
            capacity_kwh: 200.0,
            e_min_kwh: 40.0,
            e_max_kwh: 190.0,
            soc0_kwh: 150.0,
            consumption_kwh_per_mile: 2.0,
        }],
        tariff: tariff_for(&grid),
    }
}

/// A random radial feeder with `n` nodes. Node labels other than the
/// substation are shuffled and lines are listed in random order, so the
/// solver cannot lean on any numbering convention.
pub fn random_feeder(n: usize, seed: u64) -> (Scenario, Vec<f64>, Vec<f64>) {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u32> = (2..=n as u32).collect();
    labels.shuffle(&mut rng);
    labels.insert(0, 1);
    // Tree over positions: position k hangs off a random earlier position.
    let mut edges: Vec<(u32, u32)> = (1..n).map(|k| (labels[rng.gen_range(0..k)], labels[k])).collect();
    edges.shuffle(&mut rng);

    let mut s = minimal();
    s.stations.clear();
    s.coupling.clear();
    s.routes.clear();
    s.bebs.clear();
    let steps = s.grid.len();
    s.nodes = (1..=n as u32)
        .map(|id| PowerNode {
            id: NodeId(id),
            is_substation: id == 1,
            v_min: 0.9,
            v_max: 1.05,
            angle_deg: None,
            inflexible_p_kw: vec![0.0; steps],
            inflexible_q_kvar: vec![0.0; steps],
        })
        .collect();
    s.lines = edges
        .iter()
        .enumerate()
        .map(|(k, &(from, to))| PowerLine {
            id: LineId(k as u32 + 1),
            from_node: NodeId(from),
            to_node: NodeId(to),
            r_pu: rng.gen_range(0.0..0.005),
            x_pu: rng.gen_range(0.0..0.005),
            i_max_pu: 10.0,
        })
        .collect();
    let p = (1..n).map(|_| rng.gen_range(0.0..0.01)).collect();
    let q = (1..n).map(|_| rng.gen_range(0.0..0.01)).collect();
    (s, p, q)
}

/// Brute-force LinDistFlow: every quantity recomputed from first
/// principles by walking ancestor chains, without the solver's ordering.
pub struct Oracle {
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    pub v_sq: Vec<f64>,
    pub i: Vec<f64>,
}

pub fn oracle(s: &Scenario, p: &[f64], q: &[f64]) -> Oracle {
    let n = s.nodes.len();
    let pos = |id: NodeId| (id.0 - 1) as usize;
    let parent_line = |node: usize| s.lines.iter().position(|l| pos(l.to_node) == node);
    let is_below = |node: usize, top: usize| {
        let mut cur = node;
        loop {
            if cur == top {
                return true;
            }
            match parent_line(cur) {
                Some(k) => cur = pos(s.lines[k].from_node),
                None => return false,
            }
        }
    };
    let load = |node: usize, v: &[f64]| if node == 0 { 0.0 } else { v[node - 1] };
    let p_flow: Vec<f64> = s
        .lines
        .iter()
        .map(|l| (0..n).filter(|&m| is_below(m, pos(l.to_node))).map(|m| load(m, p)).sum())
        .collect();
    let q_flow: Vec<f64> = s
        .lines
        .iter()
        .map(|l| (0..n).filter(|&m| is_below(m, pos(l.to_node))).map(|m| load(m, q)).sum())
        .collect();
    fn v_of(node: usize, s: &Scenario, pf: &[f64], qf: &[f64]) -> f64 {
        match s.lines.iter().position(|l| (l.to_node.0 - 1) as usize == node) {
            None => 1.0,
            Some(k) => {
                let l = &s.lines[k];
                v_of((l.from_node.0 - 1) as usize, s, pf, qf) - 2.0 * (l.r_pu * pf[k] + l.x_pu * qf[k])
            }
        }
    }
    let v_sq: Vec<f64> = (0..n).map(|m| v_of(m, s, &p_flow, &q_flow)).collect();
    let i = s
        .lines
        .iter()
        .enumerate()
        .map(|(k, l)| (p_flow[k] * p_flow[k] + q_flow[k] * q_flow[k]).sqrt() / v_sq[pos(l.from_node)].sqrt())
        .collect();
    Oracle { p_flow, q_flow, v_sq, i }
}
