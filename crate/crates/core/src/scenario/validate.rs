use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DanglingReference,
    Invariant,
}

/// One violated rule, attributed to a component id such as `beb:4`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub component: String,
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn has_dangling(&self) -> bool {
        self.findings.iter().any(|f| f.kind == FindingKind::DanglingReference)
    }

    pub fn for_component<'a>(&'a self, component: &'a str) -> impl Iterator<Item = &'a Finding> {
        self.findings.iter().filter(move |f| f.component == component)
    }

    fn invariant(&mut self, component: impl fmt::Display, message: impl Into<String>) {
        self.findings.push(Finding {
            component: component.to_string(),
            kind: FindingKind::Invariant,
            message: message.into(),
        });
    }

    fn dangling(&mut self, component: impl fmt::Display, message: impl Into<String>) {
        self.findings.push(Finding {
            component: component.to_string(),
            kind: FindingKind::DanglingReference,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, finding) in self.findings.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "  [{}] {}", finding.component, finding.message)?;
        }
        Ok(())
    }
}

/// Check every scenario invariant and report all violations. Nothing is
/// repaired; an empty report means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_grid(s, &mut report);
    check_nodes(s, &mut report);
    check_lines(s, &mut report);
    check_stations(s, &mut report);
    check_coupling(s, &mut report);
    check_roads(s, &mut report);
    check_routes(s, &mut report);
    check_bebs(s, &mut report);
    check_tariff(s, &mut report);
    report
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Ids must be exactly `1..=n` in file order.
fn check_sequential_ids(ids: impl Iterator<Item = u32>, prefix: &str, report: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for (pos, id) in ids.enumerate() {
        if !seen.insert(id) {
            report.invariant(format!("{prefix}:{id}"), "duplicate id");
        } else if id as usize != pos + 1 {
            report.invariant(
                format!("{prefix}:{id}"),
                format!("ids must be numbered 1..n in order; found {id} at position {}", pos + 1),
            );
        }
    }
}

fn check_grid(s: &Scenario, report: &mut ValidationReport) {
    if s.format_version != SCENARIO_FORMAT_VERSION {
        report.invariant(
            "scenario",
            format!("format_version {} is not {SCENARIO_FORMAT_VERSION}", s.format_version),
        );
    }
    let g = &s.grid;
    if g.num_steps == 0 {
        report.invariant("grid", "num_steps must be positive");
    }
    if u64::from(g.step_minutes) * u64::from(g.num_steps) != 1440 {
        report.invariant(
            "grid",
            format!(
                "step_minutes x num_steps = {} x {} must equal 1440",
                g.step_minutes, g.num_steps
            ),
        );
    }
    if g.start_clock >= 24 {
        report.invariant("grid", format!("start_clock {} is not an hour of day", g.start_clock));
    }
    if !(s.bases.kv > 0.0 && s.bases.mva > 0.0) {
        report.invariant("bases", "per-unit bases must be positive");
    }
}

fn check_nodes(s: &Scenario, report: &mut ValidationReport) {
    check_sequential_ids(s.nodes.iter().map(|n| n.id.0), NodeId::PREFIX, report);
    let subs: Vec<_> = s.nodes.iter().filter(|n| n.is_substation).collect();
    if subs.len() != 1 {
        report.invariant("feeder", format!("exactly one substation required, found {}", subs.len()));
    }
    let steps = s.grid.len();
    for n in &s.nodes {
        if n.is_substation != (n.id == NodeId(1)) {
            report.invariant(n.id, "node 1 and only node 1 is the substation");
        }
        if !(n.v_min > 0.0 && n.v_min < n.v_max && n.v_max.is_finite()) {
            report.invariant(n.id, format!("voltage bounds must satisfy 0 < v_min < v_max, got [{}, {}]", n.v_min, n.v_max));
        }
        if n.inflexible_p_kw.len() != steps || n.inflexible_q_kvar.len() != steps {
            report.invariant(
                n.id,
                format!(
                    "inflexible series lengths {}/{} must equal num_steps {steps}",
                    n.inflexible_p_kw.len(),
                    n.inflexible_q_kvar.len()
                ),
            );
        }
        if n.inflexible_p_kw.iter().chain(&n.inflexible_q_kvar).any(|v| !v.is_finite()) {
            report.invariant(n.id, "inflexible load series contain non-finite values");
        }
    }
}

fn check_lines(s: &Scenario, report: &mut ValidationReport) {
    check_sequential_ids(s.lines.iter().map(|l| l.id.0), LineId::PREFIX, report);
    let nodes: BTreeSet<NodeId> = s.nodes.iter().map(|n| n.id).collect();
    let mut endpoints_ok = true;
    for l in &s.lines {
        for end in [l.from_node, l.to_node] {
            if !nodes.contains(&end) {
                report.dangling(l.id, format!("references nonexistent node {}", end.0));
                endpoints_ok = false;
            }
        }
        if l.from_node == l.to_node {
            report.invariant(l.id, "line connects a node to itself");
            endpoints_ok = false;
        }
        if !(finite_nonneg(l.r_pu) && finite_nonneg(l.x_pu)) {
            report.invariant(l.id, format!("impedance must be non-negative, got r={} x={}", l.r_pu, l.x_pu));
        }
        if !(l.i_max_pu > 0.0 && l.i_max_pu.is_finite()) {
            report.invariant(l.id, format!("ampacity must be positive, got {}", l.i_max_pu));
        }
    }
    if !endpoints_ok {
        return;
    }
    if s.lines.len() + 1 != s.nodes.len() {
        report.invariant(
            "feeder",
            format!("radial feeder needs n_lines = n_nodes - 1, got {} lines for {} nodes", s.lines.len(), s.nodes.len()),
        );
    }
    check_radiality(s, report);
}

fn check_radiality(s: &Scenario, report: &mut ValidationReport) {
    // Union-find over node ids; a line joining one component to itself closes a cycle.
    let mut parent: BTreeMap<NodeId, NodeId> = s.nodes.iter().map(|n| (n.id, n.id)).collect();
    fn find(parent: &mut BTreeMap<NodeId, NodeId>, mut x: NodeId) -> NodeId {
        while parent[&x] != x {
            let up = parent[&parent[&x]];
            parent.insert(x, up);
            x = up;
        }
        x
    }
    let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for l in &s.lines {
        let (a, b) = (find(&mut parent, l.from_node), find(&mut parent, l.to_node));
        if a == b {
            let mut cycle = tree_path(&adjacency, l.to_node, l.from_node);
            cycle.push(l.to_node);
            let names: Vec<String> = cycle.iter().map(|n| n.0.to_string()).collect();
            report.invariant(
                l.id,
                format!("line set contains a cycle through nodes {}", names.join(" -> ")),
            );
            continue;
        }
        parent.insert(a, b);
        adjacency.entry(l.from_node).or_default().push(l.to_node);
        adjacency.entry(l.to_node).or_default().push(l.from_node);
    }

    // Orientation and reachability from the substation.
    let Some(root) = s.substation().map(|n| n.id) else { return };
    let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
    depth.insert(root, 0);
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for &m in adjacency.get(&n).into_iter().flatten() {
            if !depth.contains_key(&m) {
                depth.insert(m, depth[&n] + 1);
                queue.push_back(m);
            }
        }
    }
    for n in &s.nodes {
        if !depth.contains_key(&n.id) {
            report.invariant(n.id, "node is not connected to the substation");
        }
    }
    for l in &s.lines {
        if let (Some(df), Some(dt)) = (depth.get(&l.from_node), depth.get(&l.to_node)) {
            if df + 1 != *dt && adjacency.get(&l.from_node).is_some_and(|a| a.contains(&l.to_node)) {
                report.invariant(l.id, "line must be oriented from the substation side (from_node upstream)");
            }
        }
    }
}

/// Path between two nodes in a forest given by adjacency lists.
fn tree_path(adjacency: &BTreeMap<NodeId, Vec<NodeId>>, from: NodeId, to: NodeId) -> Vec<NodeId> {
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, from);
    while let Some(n) = queue.pop_front() {
        if n == to {
            break;
        }
        for &m in adjacency.get(&n).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(m) {
                e.insert(n);
                queue.push_back(m);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        path.push(cur);
    }
    path.reverse();
    path
}

fn check_stations(s: &Scenario, report: &mut ValidationReport) {
    check_sequential_ids(s.stations.iter().map(|st| st.id.0), StationId::PREFIX, report);
    let nodes: BTreeSet<NodeId> = s.nodes.iter().map(|n| n.id).collect();
    for st in &s.stations {
        if !nodes.contains(&st.linked_node) {
            report.dangling(st.id, format!("linked to nonexistent node {}", st.linked_node.0));
        }
        if s.nodes.iter().any(|n| n.id == st.linked_node && n.is_substation) {
            report.invariant(st.id, "stations cannot link to the substation node");
        }
        if !(st.charger_rating_kw > 0.0 && st.charger_rating_kw.is_finite()) {
            report.invariant(st.id, format!("charger rating must be positive, got {}", st.charger_rating_kw));
        }
        if st.n_chargers < 1 {
            report.invariant(st.id, "station needs at least one charger");
        }
        if !(st.power_factor > 0.0 && st.power_factor <= 1.0) {
            report.invariant(st.id, format!("power factor must lie in (0, 1], got {}", st.power_factor));
        }
        if !st.layout_xy.iter().all(|v| v.is_finite()) {
            report.invariant(st.id, "layout coordinates must be finite");
        }
    }
}

fn check_coupling(s: &Scenario, report: &mut ValidationReport) {
    let nodes: BTreeSet<NodeId> = s.nodes.iter().map(|n| n.id).collect();
    let mut links_per_station: BTreeMap<StationId, usize> = BTreeMap::new();
    let mut station_for_node: BTreeMap<NodeId, StationId> = BTreeMap::new();
    for link in &s.coupling {
        let Some(st) = s.station(link.station_id) else {
            report.dangling("coupling", format!("link references nonexistent station {}", link.station_id.0));
            continue;
        };
        *links_per_station.entry(link.station_id).or_default() += 1;
        if !nodes.contains(&link.node_id) {
            report.dangling(st.id, format!("coupling link references nonexistent node {}", link.node_id.0));
        }
        if link.node_id != st.linked_node {
            report.invariant(
                st.id,
                format!("coupling link node {} differs from linked_node {}", link.node_id.0, st.linked_node.0),
            );
        }
        if let Some(other) = station_for_node.insert(link.node_id, link.station_id) {
            if other != link.station_id {
                report.invariant(
                    st.id,
                    format!("shares power node {} with station {}", link.node_id.0, other.0),
                );
            }
        }
    }
    for st in &s.stations {
        match links_per_station.get(&st.id).copied().unwrap_or(0) {
            1 => {}
            n => report.invariant(st.id, format!("needs exactly one coupling link, has {n}")),
        }
    }
}

fn check_roads(s: &Scenario, report: &mut ValidationReport) {
    let mut ids = BTreeSet::new();
    for road in &s.roads {
        if !ids.insert(road.id) {
            report.invariant(road.id, "duplicate id");
        }
        for end in road.endpoints {
            if s.station(end).is_none() {
                report.dangling(road.id, format!("endpoint references nonexistent station {}", end.0));
            }
        }
        if road.endpoints[0] == road.endpoints[1] {
            report.invariant(road.id, "endpoints must be distinct stations");
        }
        if !(road.length_miles > 0.0 && road.length_miles.is_finite()) {
            report.invariant(road.id, format!("length must be positive, got {}", road.length_miles));
        }
    }
}

fn check_routes(s: &Scenario, report: &mut ValidationReport) {
    check_sequential_ids(s.routes.iter().map(|r| r.id.0), RouteId::PREFIX, report);
    let station_ids: BTreeSet<u32> = s.stations.iter().map(|st| st.id.0).collect();
    let roads: BTreeSet<(StationId, StationId)> = s
        .roads
        .iter()
        .flat_map(|r| [(r.endpoints[0], r.endpoints[1]), (r.endpoints[1], r.endpoints[0])])
        .collect();
    for route in &s.routes {
        let id = route.id;
        if route.stops.len() < 2 {
            report.invariant(id, "route needs at least two stops");
            continue;
        }
        if route.segment_miles.len() + 1 != route.stops.len() {
            report.invariant(
                id,
                format!("{} segment distances for {} stops", route.segment_miles.len(), route.stops.len()),
            );
            continue;
        }
        for (k, stop) in route.stops.iter().enumerate() {
            if stop.arrival > stop.departure {
                report.invariant(id, format!("stop {k}: arrival {} after departure {}", stop.arrival, stop.departure));
            }
            if stop.has_charger && !station_ids.contains(&stop.stop_id) {
                report.dangling(id, format!("stop {k} references nonexistent station {}", stop.stop_id));
            }
            if !stop.has_charger && station_ids.contains(&stop.stop_id) {
                report.invariant(id, format!("stop {k}: id {} is a charging station but has_charger is false", stop.stop_id));
            }
            if stop.has_charger
                && stop.arrival <= stop.departure
                && !(MIN_DWELL_STEPS..=MAX_DWELL_STEPS).contains(&stop.dwell_steps())
            {
                report.invariant(
                    id,
                    format!("stop {k}: charger dwell of {} steps outside {MIN_DWELL_STEPS}..={MAX_DWELL_STEPS}", stop.dwell_steps()),
                );
            }
        }
        for (k, pair) in route.stops.windows(2).enumerate() {
            if pair[0].departure >= pair[1].arrival {
                report.invariant(id, format!("segment {k}: scheduled steps must strictly increase"));
            }
            let miles = route.segment_miles[k];
            if !(miles > 0.0 && miles.is_finite()) {
                report.invariant(id, format!("segment {k}: distance must be positive, got {miles}"));
            }
        }
        // Charger-to-charger legs, possibly spanning plain stops.
        let mut last_charger: Option<(usize, u32)> = None;
        let mut miles_since = 0.0;
        for (k, stop) in route.stops.iter().enumerate() {
            if k > 0 {
                miles_since += route.segment_miles[k - 1];
            }
            if !stop.has_charger {
                continue;
            }
            if let Some((from_k, from_stop)) = last_charger {
                if !(MIN_SEGMENT_MILES..=MAX_SEGMENT_MILES).contains(&miles_since) {
                    report.invariant(
                        id,
                        format!(
                            "charger-to-charger leg {from_k}->{k} is {miles_since} miles, outside [{MIN_SEGMENT_MILES}, {MAX_SEGMENT_MILES}]"
                        ),
                    );
                }
                if !roads.is_empty()
                    && !roads.contains(&(StationId(from_stop), StationId(stop.stop_id)))
                {
                    report.invariant(
                        id,
                        format!("no road joins stations {from_stop} and {} (stops {from_k}->{k})", stop.stop_id),
                    );
                }
            }
            last_charger = Some((k, stop.stop_id));
            miles_since = 0.0;
        }
    }
}

fn check_bebs(s: &Scenario, report: &mut ValidationReport) {
    check_sequential_ids(s.bebs.iter().map(|b| b.id.0), BebId::PREFIX, report);
    for b in &s.bebs {
        if !(0.0 <= b.e_min_kwh && b.e_min_kwh < b.e_max_kwh && b.e_max_kwh <= b.capacity_kwh && b.capacity_kwh.is_finite()) {
            report.invariant(
                b.id,
                format!(
                    "energy thresholds must satisfy 0 <= e_min < e_max <= capacity, got {} / {} / {}",
                    b.e_min_kwh, b.e_max_kwh, b.capacity_kwh
                ),
            );
        }
        if !(b.e_min_kwh <= b.soc0_kwh && b.soc0_kwh <= b.e_max_kwh) {
            report.invariant(
                b.id,
                format!("initial energy {} outside [{}, {}]", b.soc0_kwh, b.e_min_kwh, b.e_max_kwh),
            );
        }
        if !(b.consumption_kwh_per_mile > 0.0 && b.consumption_kwh_per_mile.is_finite()) {
            report.invariant(b.id, format!("consumption must be positive, got {}", b.consumption_kwh_per_mile));
        }
        let Some(route) = s.route(b.route_id) else {
            report.dangling(b.id, format!("references nonexistent route {}", b.route_id.0));
            continue;
        };
        if let (Some(first), Some(last)) = (route.stops.first(), route.stops.last()) {
            let start = b.offset_steps;
            let end = b.offset_steps + s.grid.num_steps;
            if first.arrival > start || last.departure < end {
                report.invariant(
                    b.id,
                    format!(
                        "route {} timetable [{}, {}] does not cover route steps [{start}, {end}]",
                        route.id.0, first.arrival, last.departure
                    ),
                );
            }
        }
    }
}

fn check_tariff(s: &Scenario, report: &mut ValidationReport) {
    let tariff = &s.tariff;
    let steps = s.grid.len();
    for (name, len) in [
        ("tou_price", tariff.tou_price.len()),
        ("tou_period", tariff.tou_period.len()),
        ("lmp", tariff.lmp.len()),
    ] {
        if len != steps {
            report.invariant("tariff", format!("{name} has {len} entries, expected {steps}"));
        }
    }
    if !tariff.tou_price.iter().chain(&tariff.lmp).all(|&v| finite_nonneg(v)) {
        report.invariant("tariff", "prices must be finite and non-negative");
    }
    if !finite_nonneg(tariff.demand_rate_per_kw) {
        report.invariant("tariff", "demand rate must be finite and non-negative");
    }
    if ![15, 60].contains(&tariff.demand_interval_minutes) {
        report.invariant(
            "tariff",
            format!("demand interval must be 15 or 60 minutes, got {}", tariff.demand_interval_minutes),
        );
    } else if s.grid.step_minutes > 0 && !tariff.demand_interval_minutes.is_multiple_of(s.grid.step_minutes) {
        report.invariant("tariff", "demand interval must be a whole number of steps");
    }
    if s.grid.num_steps > 0 {
        for (t, label) in tariff.tou_period.iter().enumerate().take(steps) {
            let expected = s.grid.tou_period(t).expect("t within grid");
            if *label != expected {
                report.invariant(
                    "tariff",
                    format!("step {t} labelled {label} but the clock puts it in {expected}"),
                );
                break;
            }
        }
    }
}
