mod common;

use common::oracle;
use proptest::prelude::*;
use transitgrid_core::powerflow::*;
use transitgrid_core::scenario::parkcity;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_matches_brute_force(n in 2usize..=50, seed in any::<u64>()) {
        let (s, p, q) = common::random_feeder(n, seed);
        let sol = solve_lindistflow(&s, &NodalLoad { p: p.clone(), q: q.clone() }).unwrap();
        let o = oracle(&s, &p, &q);
        prop_assert!(close(&sol.p_flow, &o.p_flow, 1e-12));
        prop_assert!(close(&sol.q_flow, &o.q_flow, 1e-12));
        prop_assert!(close(&sol.v_sq, &o.v_sq, 1e-12));
        prop_assert!(close(&sol.i, &o.i, 1e-12));
        prop_assert_eq!(sol.v_sq[0], 1.0);
    }

    #[test]
    fn superposition(n in 2usize..=50, seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (s, p1, q1) = common::random_feeder(n, seed);
        let (_, p2, q2) = common::random_feeder(n, seed.wrapping_add(1));
        let l1 = NodalLoad { p: p1, q: q1 };
        let l2 = NodalLoad { p: p2, q: q2 };
        let f = Feeder::new(&s).unwrap();
        let (s1, s2) = (f.solve(&l1).unwrap(), f.solve(&l2).unwrap());
        let mix = f.solve(&l1.combine(a, &l2, b)).unwrap();
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect::<Vec<_>>();
        prop_assert!(close(&mix.p_flow, &lin(&s1.p_flow, &s2.p_flow), 1e-12));
        prop_assert!(close(&mix.q_flow, &lin(&s1.q_flow, &s2.q_flow), 1e-12));
        // Voltage drops (1 - v_sq) are linear in load as well.
        let drop = |v: &[f64]| v.iter().map(|v| 1.0 - v).collect::<Vec<_>>();
        prop_assert!(close(&drop(&mix.v_sq), &lin(&drop(&s1.v_sq), &drop(&s2.v_sq)), 1e-12));
    }

    #[test]
    fn conservation_and_monotone_voltage(n in 2usize..=50, seed in any::<u64>()) {
        let (s, p, q) = common::random_feeder(n, seed);
        let sol = solve_lindistflow(&s, &NodalLoad { p: p.clone(), q: q.clone() }).unwrap();
        for (k, l) in s.lines.iter().enumerate() {
            let j = l.to_node;
            let out: Vec<usize> = (0..s.lines.len()).filter(|&m| s.lines[m].from_node == j).collect();
            let slot = (j.0 - 2) as usize;
            let p_out: f64 = out.iter().map(|&m| sol.p_flow[m]).sum::<f64>() + p[slot];
            let q_out: f64 = out.iter().map(|&m| sol.q_flow[m]).sum::<f64>() + q[slot];
            prop_assert!((sol.p_flow[k] - p_out).abs() <= 1e-12);
            prop_assert!((sol.q_flow[k] - q_out).abs() <= 1e-12);
            let (vi, vj) = (sol.v_sq[(l.from_node.0 - 1) as usize], sol.v_sq[(j.0 - 1) as usize]);
            prop_assert!(vj <= vi, "voltage rises along line {}", l.id);
        }
    }

    #[test]
    fn substation_balance(n in 2usize..=50, seed in any::<u64>()) {
        let (s, p, q) = common::random_feeder(n, seed);
        let sol = solve_lindistflow(&s, &NodalLoad { p: p.clone(), q: q.clone() }).unwrap();
        let (kw, kvar) = substation_power(&sol, &s).unwrap();
        let k = s.bases.kw_per_pu();
        let (tp, tq) = (p.iter().sum::<f64>() * k, q.iter().sum::<f64>() * k);
        prop_assert!((kw - tp).abs() <= 1e-9 * tp.abs().max(1.0));
        prop_assert!((kvar - tq).abs() <= 1e-9 * tq.abs().max(1.0));
    }
}

#[test]
fn every_reported_violation_breaches_its_limit() {
    let s = parkcity::park_city_33();
    let f = Feeder::new(&s).unwrap();
    let base: Vec<f64> = s.nodes[1..].iter().map(|nd| nd.inflexible_p_kw[150]).collect();
    let q: Vec<f64> = s.nodes[1..].iter().map(|nd| nd.inflexible_q_kvar[150]).collect();
    for scale in [1.0, 1.3, 1.6] {
        let p: Vec<f64> = base.iter().map(|v| v * scale).collect();
        let qs: Vec<f64> = q.iter().map(|v| v * scale).collect();
        let sol = f.solve(&NodalLoad::from_kw(&s.bases, &p, &qs)).unwrap();
        let found = check_limits(&sol, &s, 150);
        if scale == 1.6 {
            assert!(!found.is_empty(), "160% load should breach a limit");
        }
        for v in found {
            match v.kind {
                ViolationKind::Undervoltage => assert!(v.value < v.limit),
                ViolationKind::Overvoltage | ViolationKind::Overcurrent => assert!(v.value > v.limit),
            }
        }
    }
}

#[test]
fn bundled_base_load_is_feasible_all_day() {
    let s = parkcity::park_city_33();
    let f = Feeder::new(&s).unwrap();
    for t in 0..s.grid.len() {
        let p: Vec<f64> = s.nodes[1..].iter().map(|nd| nd.inflexible_p_kw[t]).collect();
        let q: Vec<f64> = s.nodes[1..].iter().map(|nd| nd.inflexible_q_kvar[t]).collect();
        let sol = f.solve(&NodalLoad::from_kw(&s.bases, &p, &q)).unwrap();
        assert!(check_limits(&sol, &s, t).is_empty(), "t={t}");
    }
}
