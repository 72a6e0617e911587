//! Synthesized Park City test system on the 33-bus feeder.
//!
//! Seven charger stations sit at fixed layout positions joined by a six-road
//! tree. Nine routes shuttle back and forth along paths of that tree and
//! five BEBs are staggered along each route timetable. Road lengths, route
//! speeds and initial energies come from a seeded generator so the bundled
//! file is reproducible with [`park_city_33`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::feeder33::{BRANCHES, LOADS};
use super::*;

/// Seed of the bundled scenario.
pub const BUNDLED_SEED: u64 = 20_200_533;

const STATIONS: [(&str, [f64; 2], u32, u32); 7] = [
    ("Kimball Junction", [22.0, 18.0], 25, 2),
    ("Canyons Village", [6.0, 34.0], 22, 2),
    ("Park City Mountain", [36.0, 60.0], 8, 2),
    ("Old Town Transit Center", [47.0, 70.0], 13, 3),
    ("Deer Valley", [56.0, 90.0], 16, 2),
    ("Prospector", [64.0, 56.0], 29, 2),
    ("Quinn's Junction", [90.0, 38.0], 32, 2),
];

const ROADS: [(u32, u32); 6] = [(1, 2), (1, 3), (3, 4), (4, 5), (4, 6), (6, 7)];

/// Station paths along the road tree.
const ROUTES: [&[u32]; 9] = [
    &[2, 1, 3, 4],
    &[4, 5],
    &[4, 6, 7],
    &[1, 3],
    &[3, 4, 5],
    &[2, 1],
    &[5, 4, 6],
    &[1, 3, 4, 6, 7],
    &[4, 6],
];

pub const BEBS_PER_ROUTE: u32 = 5;

/// Knobs of the synthesizer. [`SynthOptions::bundled`] reproduces the
/// shipped scenario; [`SynthOptions::randomized`] perturbs it.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub name: String,
    pub bebs_per_route: u32,
    pub capacity_kwh: f64,
    pub e_min_frac: f64,
    pub e_max_frac: f64,
    /// Range of per-BEB consumption, kWh/mile.
    pub consumption: (f64, f64),
    /// Range of scheduled route speed, mph.
    pub speed_mph: (f64, f64),
    /// Scale on the nominal feeder load.
    pub load_scale: f64,
    pub charger_rating_kw: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub ampacity_margin: f64,
    pub ampacity_floor_pu: f64,
    /// Per-station (node, chargers); defaults to the fixed map.
    pub station_nodes: Vec<(u32, u32)>,
}

impl SynthOptions {
    pub fn bundled() -> Self {
        Self {
            seed: BUNDLED_SEED,
            name: "parkcity33".into(),
            bebs_per_route: BEBS_PER_ROUTE,
            capacity_kwh: 200.0,
            e_min_frac: 0.2,
            e_max_frac: 0.95,
            consumption: (2.0, 2.0),
            speed_mph: (7.0, 9.0),
            load_scale: 1.0,
            charger_rating_kw: 500.0,
            v_min: 0.90,
            v_max: 1.05,
            ampacity_margin: 1.5,
            ampacity_floor_pu: 0.1,
            station_nodes: STATIONS.iter().map(|s| (s.2, s.3)).collect(),
        }
    }

    /// A perturbed variant: random station nodes and charger counts, load
    /// level, consumption rates and speeds.
    pub fn randomized(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_7a11);
        let mut candidates: Vec<u32> = (2..=33).collect();
        let mut station_nodes = Vec::with_capacity(STATIONS.len());
        for _ in 0..STATIONS.len() {
            let k = rng.gen_range(0..candidates.len());
            station_nodes.push((candidates.swap_remove(k), rng.gen_range(1..=3)));
        }
        Self {
            seed,
            name: format!("parkcity33-random-{seed}"),
            consumption: (1.7, 2.2),
            speed_mph: (6.5, 9.0),
            load_scale: rng.gen_range(0.7..1.05),
            station_nodes,
            ..Self::bundled()
        }
    }
}

/// The bundled 33-node / 7-station / 45-BEB scenario.
/// Component counts of the Park City network.
pub const PARK_CITY_COUNTS: ScenarioCounts = ScenarioCounts {
    nodes: 33,
    lines: 32,
    stations: 7,
    coupling_links: 7,
    roads: 6,
    routes: 9,
    bebs: 45,
    steps: 288,
};

/// Load a Park City scenario file, rejecting any whose size differs from
/// [`PARK_CITY_COUNTS`].
pub fn load_bundled(path: impl AsRef<std::path::Path>) -> Result<Scenario, ScenarioError> {
    let s = load_scenario(path)?;
    let found = s.counts();
    if found != PARK_CITY_COUNTS {
        return Err(ScenarioError::Counts { found: Box::new(found), expected: Box::new(PARK_CITY_COUNTS) });
    }
    Ok(s)
}

pub fn park_city_33() -> Scenario {
    synthesize(&SynthOptions::bundled())
}

fn round_to(v: f64, digits: i32) -> f64 {
    let k = 10f64.powi(digits);
    (v * k).round() / k
}

/// Daily shape of the inflexible load, peaking in the evening.
fn load_shape(hour: f64) -> f64 {
    0.6 + 0.2 * (std::f64::consts::TAU * (hour - 19.0) / 24.0).cos()
}

/// Diurnal LMP between 20 and 60 $/MWh with its high at 18:30.
fn lmp_curve(hour: f64) -> f64 {
    40.0 + 20.0 * (std::f64::consts::TAU * (hour - 18.5) / 24.0).cos()
}

pub fn tou_price(period: TouPeriod) -> f64 {
    match period {
        TouPeriod::OffPeak => 0.08,
        TouPeriod::MidPeak => 0.12,
        TouPeriod::Peak => 0.30,
    }
}

pub fn synthesize(opts: &SynthOptions) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let grid = TimeGrid::default();
    let bases = PerUnitBases::default();
    let z_base = bases.kv * bases.kv / bases.mva;
    let hours: Vec<f64> = (0..grid.len())
        .map(|t| f64::from(grid.start_clock) + t as f64 * grid.step_hours())
        .collect();

    let nodes = feeder_nodes(opts, &hours);
    let lines = feeder_lines(opts, z_base, bases.kw_per_pu());

    let stations: Vec<ChargingStation> = STATIONS
        .iter()
        .zip(&opts.station_nodes)
        .enumerate()
        .map(|(k, ((name, xy, _, _), &(node, chargers)))| ChargingStation {
            id: StationId(k as u32 + 1),
            name: (*name).to_string(),
            linked_node: NodeId(node),
            charger_rating_kw: opts.charger_rating_kw,
            n_chargers: chargers,
            power_factor: 0.98,
            layout_xy: *xy,
        })
        .collect();
    let coupling = stations
        .iter()
        .map(|s| CouplingLink { station_id: s.id, node_id: s.linked_node })
        .collect();

    // One road at each end of the distance range, the rest drawn inside it.
    let mut lengths: Vec<f64> = vec![MIN_SEGMENT_MILES, MAX_SEGMENT_MILES];
    while lengths.len() < ROADS.len() {
        lengths.push(round_to(rng.gen_range(MIN_SEGMENT_MILES..MAX_SEGMENT_MILES), 2));
    }
    for k in (1..lengths.len()).rev() {
        lengths.swap(k, rng.gen_range(0..=k));
    }
    let roads: Vec<Road> = ROADS
        .iter()
        .zip(&lengths)
        .enumerate()
        .map(|(k, (&(a, b), &len))| Road {
            id: RoadId(k as u32 + 1),
            endpoints: [StationId(a), StationId(b)],
            length_miles: len,
        })
        .collect();
    let road_len: BTreeMap<(u32, u32), f64> = roads
        .iter()
        .flat_map(|r| {
            let (a, b) = (r.endpoints[0].0, r.endpoints[1].0);
            [((a, b), r.length_miles), ((b, a), r.length_miles)]
        })
        .collect();

    let mut routes = Vec::with_capacity(ROUTES.len());
    let mut bebs = Vec::new();
    for (k, path) in ROUTES.iter().enumerate() {
        let route_id = RouteId(k as u32 + 1);
        let speed = rng.gen_range(opts.speed_mph.0..=opts.speed_mph.1);
        let pattern = shuttle_pattern(path);
        let cycle_steps = cycle_length(&pattern, &road_len, speed);
        let offsets: Vec<u32> = (0..opts.bebs_per_route)
            .map(|i| (f64::from(i) * f64::from(cycle_steps) / f64::from(opts.bebs_per_route)).round() as u32)
            .collect();
        let horizon_end = offsets.last().copied().unwrap_or(0) + grid.num_steps;
        routes.push(build_timetable(route_id, &pattern, &road_len, speed, horizon_end, &mut rng));

        for offset in offsets {
            let id = BebId(bebs.len() as u32 + 1);
            let e_min = opts.capacity_kwh * opts.e_min_frac;
            let e_max = opts.capacity_kwh * opts.e_max_frac;
            let soc0 = round_to(e_min + rng.gen_range(0.65..=1.0) * (e_max - e_min), 3).min(e_max);
            let consumption = if opts.consumption.0 == opts.consumption.1 {
                opts.consumption.0
            } else {
                round_to(rng.gen_range(opts.consumption.0..opts.consumption.1), 3)
            };
            bebs.push(Beb {
                id,
                route_id,
                offset_steps: offset,
                capacity_kwh: opts.capacity_kwh,
                e_min_kwh: e_min,
                e_max_kwh: e_max,
                soc0_kwh: soc0,
                consumption_kwh_per_mile: consumption,
            });
        }
    }

    let tou_period: Vec<TouPeriod> =
        (0..grid.len()).map(|t| grid.tou_period(t).expect("within grid")).collect();
    let tariff = Tariff {
        tou_price: tou_period.iter().map(|&p| tou_price(p)).collect(),
        tou_period,
        lmp: hours.iter().map(|&h| round_to(lmp_curve(h), 6)).collect(),
        demand_rate_per_kw: 15.0,
        demand_interval_minutes: 15,
    };

    Scenario {
        format_version: SCENARIO_FORMAT_VERSION,
        name: opts.name.clone(),
        grid,
        bases,
        nodes,
        lines,
        stations,
        coupling,
        roads,
        routes,
        bebs,
        tariff,
    }
}

fn feeder_nodes(opts: &SynthOptions, hours: &[f64]) -> Vec<PowerNode> {
    let mut nodes = vec![PowerNode {
        id: NodeId(1),
        is_substation: true,
        v_min: opts.v_min,
        v_max: opts.v_max,
        angle_deg: Some(0.0),
        inflexible_p_kw: vec![0.0; hours.len()],
        inflexible_q_kvar: vec![0.0; hours.len()],
    }];
    for (k, &(p, q)) in LOADS.iter().enumerate() {
        // Small per-node phase shift so nodes do not move in lockstep.
        let shift = (k % 5) as f64 * 0.25 - 0.5;
        let factors: Vec<f64> = hours.iter().map(|&h| opts.load_scale * load_shape(h + shift)).collect();
        nodes.push(PowerNode {
            id: NodeId(k as u32 + 2),
            is_substation: false,
            v_min: opts.v_min,
            v_max: opts.v_max,
            angle_deg: None,
            inflexible_p_kw: factors.iter().map(|f| round_to(p * f, 4)).collect(),
            inflexible_q_kvar: factors.iter().map(|f| round_to(q * f, 4)).collect(),
        });
    }
    nodes
}

/// Lines in per unit with ampacity sized from the nominal-load current.
fn feeder_lines(opts: &SynthOptions, z_base: f64, kw_per_pu: f64) -> Vec<PowerLine> {
    // Downstream nominal load of each branch; BRANCHES lists parents first.
    let mut down: BTreeMap<u32, (f64, f64)> = (2..=33u32)
        .map(|n| (n, (LOADS[n as usize - 2].0, LOADS[n as usize - 2].1)))
        .collect();
    for &(from, to, _, _) in BRANCHES.iter().rev() {
        if from != 1 {
            let (p, q) = down[&to];
            let e = down.get_mut(&from).expect("node");
            e.0 += p;
            e.1 += q;
        }
    }
    BRANCHES
        .iter()
        .enumerate()
        .map(|(k, &(from, to, r, x))| {
            let (p, q) = down[&to];
            let nominal = (p * p + q * q).sqrt() * opts.load_scale / kw_per_pu;
            PowerLine {
                id: LineId(k as u32 + 1),
                from_node: NodeId(from),
                to_node: NodeId(to),
                r_pu: r / z_base,
                x_pu: x / z_base,
                i_max_pu: round_to(opts.ampacity_margin * nominal + opts.ampacity_floor_pu, 3),
            }
        })
        .collect()
}

/// Back-and-forth visiting order for one cycle: `a b c b` for path `a b c`.
fn shuttle_pattern(path: &[u32]) -> Vec<u32> {
    let mut pattern = path.to_vec();
    pattern.extend(path[1..path.len() - 1].iter().rev());
    pattern
}

fn travel_steps(miles: f64, speed_mph: f64) -> u32 {
    ((miles / speed_mph * 12.0).round() as u32).max(1)
}

fn cycle_length(pattern: &[u32], road_len: &BTreeMap<(u32, u32), f64>, speed: f64) -> u32 {
    // Average dwell of 1.5 steps per call.
    let travel: u32 = (0..pattern.len())
        .map(|k| travel_steps(road_len[&(pattern[k], pattern[(k + 1) % pattern.len()])], speed))
        .sum();
    travel + (pattern.len() as u32 * 3).div_ceil(2)
}

fn build_timetable(
    id: RouteId,
    pattern: &[u32],
    road_len: &BTreeMap<(u32, u32), f64>,
    speed: f64,
    horizon_end: u32,
    rng: &mut ChaCha8Rng,
) -> Route {
    let mut stops = Vec::new();
    let mut segment_miles = Vec::new();
    let mut clock = 0u32;
    let mut k = 0usize;
    loop {
        let station = pattern[k % pattern.len()];
        let dwell = rng.gen_range(MIN_DWELL_STEPS..=MAX_DWELL_STEPS);
        stops.push(StopVisit { stop_id: station, has_charger: true, arrival: clock, departure: clock + dwell });
        clock += dwell;
        if clock >= horizon_end {
            break;
        }
        let next = pattern[(k + 1) % pattern.len()];
        let miles = road_len[&(station, next)];
        segment_miles.push(miles);
        clock += travel_steps(miles, speed);
        k += 1;
    }
    Route { id, stops, segment_miles }
}
