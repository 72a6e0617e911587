mod common;

use proptest::prelude::*;
use transitgrid_core::policy::{tou_period, ChargingPolicy, CoupledGrid, Naive, Opportunistic, MAX_REPAIR_ROUNDS};
use transitgrid_core::powerflow::{check_limits, ViolationKind};
use transitgrid_core::scenario::{parkcity, Beb, BebId, Scenario, TouPeriod};
use transitgrid_core::transit::FleetState;
use transitgrid_core::{run_horizon, PolicyKind};

/// Mid-peak step where the minimal scenario's BEB sits at the depot.
const PARKED_MID_PEAK: usize = 0;
/// Peak step where the BEB sits at the depot.
const PARKED_PEAK: usize = 161;

fn plan(s: &Scenario, policy: &dyn ChargingPolicy, t: usize, soc: &[f64]) -> transitgrid_core::policy::StepPlan {
    let grid = CoupledGrid::new(s).unwrap();
    let fs = FleetState::at(s, t, soc).unwrap();
    policy.decide(&grid, &fs).unwrap()
}

#[test]
fn tou_examples() {
    let s = parkcity::park_city_33();
    assert_eq!(tou_period(156, &s), TouPeriod::Peak);
    assert_eq!(tou_period(227, &s), TouPeriod::Peak);
    assert_eq!(tou_period(228, &s), TouPeriod::OffPeak);
    assert_eq!(tou_period(0, &s), TouPeriod::MidPeak);
    assert_eq!(tou_period(155, &s), TouPeriod::MidPeak);
}

#[test]
fn mid_peak_charges_at_min_of_rating_and_headroom() {
    let s = common::minimal();
    let p = plan(&s, &Opportunistic, PARKED_MID_PEAK, &[150.0]);
    assert_eq!(p.decisions.len(), 1);
    // 40 kWh of headroom over 5 minutes is 480 kW, below the 500 kW rating.
    assert_eq!(p.decisions[0].power_kw, 480.0);
    assert!(p.emergency.is_empty());
    assert!(p.violations.is_empty());

    let p = plan(&s, &Opportunistic, PARKED_MID_PEAK, &[100.0]);
    assert_eq!(p.decisions[0].power_kw, 500.0);
}

#[test]
fn full_battery_gets_nothing() {
    let s = common::minimal();
    for policy in [&Opportunistic as &dyn ChargingPolicy, &Naive] {
        assert!(plan(&s, policy, PARKED_MID_PEAK, &[190.0]).decisions.is_empty());
    }
}

#[test]
fn comfortable_beb_waits_out_the_peak_naive_does_not() {
    let s = common::minimal();
    let p = plan(&s, &Opportunistic, PARKED_PEAK, &[60.0]);
    assert!(p.decisions.is_empty());
    assert!(p.emergency.is_empty());
    let p = plan(&s, &Naive, PARKED_PEAK, &[60.0]);
    assert_eq!(p.decisions[0].power_kw, 500.0);
}

#[test]
fn peak_emergency_gets_the_minimum_sufficient_power() {
    let s = common::minimal();
    // 6 miles at 2 kWh/mi before the next charger: 41 - 12 = 29, short of 40 by 11 kWh.
    let p = plan(&s, &Opportunistic, PARKED_PEAK, &[41.0]);
    assert_eq!(p.decisions.len(), 1);
    assert_eq!(p.decisions[0].power_kw, 132.0);
    assert_eq!(p.emergency, vec![BebId(1)]);
}

#[test]
fn on_road_bebs_get_nothing() {
    let s = common::minimal();
    for t in [2, 3, 5, 6] {
        assert!(plan(&s, &Naive, t, &[100.0]).decisions.is_empty());
    }
}

fn two_at_depot(n_chargers: u32) -> Scenario {
    let mut s = common::minimal();
    s.stations[0].n_chargers = n_chargers;
    let second = Beb { id: BebId(2), ..s.bebs[0].clone() };
    s.bebs.push(second);
    s
}

#[test]
fn lowest_soc_is_served_first_within_charger_and_capacity_limits() {
    let s = two_at_depot(1);
    let p = plan(&s, &Naive, PARKED_MID_PEAK, &[150.0, 100.0]);
    assert_eq!(p.decisions.len(), 1);
    assert_eq!((p.decisions[0].beb_id, p.decisions[0].power_kw), (BebId(2), 500.0));

    let s = two_at_depot(2);
    let p = plan(&s, &Naive, PARKED_MID_PEAK, &[150.0, 100.0]);
    let got: Vec<_> = p.decisions.iter().map(|d| (d.beb_id, d.power_kw)).collect();
    assert_eq!(got, vec![(BebId(1), 480.0), (BebId(2), 500.0)]);
    assert_eq!(p.station_kw, vec![980.0]);

    // Equal SOC falls back to id order.
    let s = two_at_depot(1);
    let p = plan(&s, &Naive, PARKED_MID_PEAK, &[120.0, 120.0]);
    assert_eq!(p.decisions[0].beb_id, BebId(1));
}

#[test]
fn infeasible_at_zero_is_flagged_and_charging_withheld() {
    let mut s = common::minimal();
    s.nodes[1].v_min = 0.9999;
    let p = plan(&s, &Naive, PARKED_MID_PEAK, &[100.0]);
    assert!(p.infeasible_at_zero);
    assert!(p.decisions.is_empty());
    assert!(p.violations.iter().any(|v| v.kind == ViolationKind::Undervoltage));
    assert_eq!(p.repair_rounds, MAX_REPAIR_ROUNDS);
}

/// Same line arithmetic as the solver, written out for one line.
fn v_at_far_node(s: &Scenario, station_kw: f64) -> (f64, f64) {
    let k = s.bases.kw_per_pu();
    let st = &s.stations[0];
    let p = (s.nodes[1].inflexible_p_kw[0] + station_kw) / k;
    let q = (s.nodes[1].inflexible_q_kvar[0] + station_kw * st.reactive_per_kw()) / k;
    let line = &s.lines[0];
    let v = (1.0 - 2.0 * (line.r_pu * p + line.x_pu * q)).sqrt();
    (v, (p * p + q * q).sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn repair_takes_the_smallest_feasible_cut(r in 0.05f64..3.0, soc in 100.0f64..150.0) {
        let mut s = common::minimal();
        s.lines[0].r_pu = r;
        s.lines[0].x_pu = r;
        let original = ((190.0 - soc) * 12.0).min(500.0);
        let ok = |kw: f64| {
            let (v, i) = v_at_far_node(&s, kw);
            v >= s.nodes[1].v_min && i <= s.lines[0].i_max_pu
        };
        let k = (0..=MAX_REPAIR_ROUNDS)
            .find(|&k| ok(original * f64::from(MAX_REPAIR_ROUNDS - k) / 10.0))
            .unwrap_or(MAX_REPAIR_ROUNDS);
        let p = plan(&s, &Naive, PARKED_MID_PEAK, &[soc]);
        let expected = original * f64::from(MAX_REPAIR_ROUNDS - k) / 10.0;
        let got = p.decisions.first().map_or(0.0, |d| d.power_kw);
        prop_assert!((got - expected).abs() <= 1e-9 * original, "r={r}: got {got}, want {expected} (k={k})");
        prop_assert_eq!(p.repair_rounds, k);
        prop_assert!(p.infeasible_at_zero || p.violations.is_empty());
    }
}

#[test]
fn five_megawatt_station_load_is_caught() {
    let s = parkcity::park_city_33();
    let grid = CoupledGrid::new(&s).unwrap();
    let t = 200;
    assert!(check_limits(&grid.solve(t, &vec![0.0; s.stations.len()]).unwrap(), &s, t).is_empty());
    for sp in 0..s.stations.len() {
        let mut kw = vec![0.0; s.stations.len()];
        kw[sp] = 5000.0;
        let v = check_limits(&grid.solve(t, &kw).unwrap(), &s, t);
        assert!(
            v.iter().any(|v| matches!(v.kind, ViolationKind::Undervoltage | ViolationKind::Overcurrent)),
            "station {} at node {}",
            s.stations[sp].id,
            s.stations[sp].linked_node
        );
    }
}

#[test]
fn bundled_runs_are_feasible_and_abstain_at_peak() {
    let s = parkcity::park_city_33();
    for kind in [PolicyKind::Opportunistic, PolicyKind::Naive] {
        let stream = run_horizon(&s, kind.policy()).unwrap();
        for snap in &stream.snapshots {
            if !snap.flags.infeasible_at_zero {
                assert!(snap.flags.violations.is_empty(), "{kind} t={}: {:?}", snap.t, snap.flags.violations);
            }
            let present = s.stations.iter().zip(&snap.stations);
            for (st, rec) in present {
                let n = snap.bebs.iter().filter(|b| b.charging_kw > 0.0 && b.location.station() == Some(st.id)).count();
                assert!(n as u32 <= st.n_chargers);
                assert!(rec.p_kw <= st.capacity_kw());
            }
            if kind == PolicyKind::Opportunistic && snap.prices.tou_period == TouPeriod::Peak {
                for b in &snap.bebs {
                    assert!(b.charging_kw == 0.0 || b.emergency, "t={} beb {} charged at peak", snap.t, b.id);
                }
            }
        }
    }
}

#[test]
fn policies_coincide_outside_the_peak() {
    let s = parkcity::park_city_33();
    let grid = CoupledGrid::new(&s).unwrap();
    let stream = run_horizon(&s, &Opportunistic).unwrap();
    for snap in stream.snapshots.iter().filter(|snap| snap.prices.tou_period != TouPeriod::Peak) {
        let soc: Vec<f64> = snap.bebs.iter().map(|b| b.soc_kwh).collect();
        let fs = FleetState::at(&s, snap.t, &soc).unwrap();
        let a = Opportunistic.decide(&grid, &fs).unwrap();
        let b = Naive.decide(&grid, &fs).unwrap();
        assert_eq!(a.decisions, b.decisions, "t={}", snap.t);
    }
}

#[test]
fn policies_are_deterministic() {
    let s = parkcity::synthesize(&parkcity::SynthOptions::randomized(11));
    for kind in [PolicyKind::Opportunistic, PolicyKind::Naive] {
        assert_eq!(run_horizon(&s, kind.policy()).unwrap(), run_horizon(&s, kind.policy()).unwrap());
    }
}

#[test]
fn opportunistic_keeps_energy_where_naive_does() {
    let s = parkcity::park_city_33();
    let naive = run_horizon(&s, &Naive).unwrap();
    let opp = run_horizon(&s, &Opportunistic).unwrap();
    let naive_ok = naive.snapshots.iter().all(|snap| snap.bebs.iter().all(|b| !b.energy_infeasible));
    assert!(naive_ok);
    for snap in &opp.snapshots {
        for (b, rec) in s.bebs.iter().zip(&snap.bebs) {
            assert!(rec.soc_kwh >= b.e_min_kwh - 1e-9, "beb {} t={}: {}", b.id, snap.t, rec.soc_kwh);
        }
    }
}
