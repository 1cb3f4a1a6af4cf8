mod common;

use common::*;
use proptest::prelude::*;
use sideinfo_core::ba::{gp_channel_capacity, SolveOptions, StrategyChannel};
use sideinfo_core::case2::*;
use sideinfo_core::instance::{example1, EXAMPLE1_EPSILON};
use sideinfo_core::theory::{eval_cc, CcCase};

fn mix(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| a * p + (1.0 - a) * q).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inner_lemmas_hold(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ch = random_binary_channel(&mut r);
        let w = random_kernel(&mut r, &ch.s2, &bit("V2"));
        let inner = Case2Inner::new(&ch, &w).unwrap();
        let nq = inner.ns1 * inner.nv2;
        let nb = inner.ny * inner.ns2 * inner.nv2;

        let (q1, q2) = (rows(&mut r, nq, inner.nt), rows(&mut r, nq, inner.nt));
        let (b1, b2) = (rows(&mut r, nb, inner.nt), rows(&mut r, nb, inner.nt));
        for a in [0.25, 0.5, 0.75] {
            let lhs = inner.j_w(&mix(a, &q1, &q2), &mix(a, &b1, &b2));
            let rhs = a * inner.j_w(&q1, &b1) + (1.0 - a) * inner.j_w(&q2, &b2);
            prop_assert!(lhs >= rhs - 1e-10);
        }

        let star = inner.big_q_star(&q1);
        let best = inner.j_w(&q1, &star);
        for _ in 0..100 {
            prop_assert!(inner.j_w(&q1, &rows(&mut r, nb, inner.nt)) <= best);
        }
        let best = inner.j_w(&inner.q_star(&b1), &b1);
        for _ in 0..100 {
            prop_assert!(inner.j_w(&rows(&mut r, nq, inner.nt), &b1) <= best);
        }

        let u = inner.u_w(&q1, &star);
        for _ in 0..20 {
            let q = rows(&mut r, nq, inner.nt);
            prop_assert!(inner.j_w(&q, &inner.big_q_star(&q)) <= u);
        }

        let rep = inner.solve(1e-8, 1_000_000);
        prop_assert!(rep.converged && rep.gap < 1e-8);
        prop_assert!(rep.value <= u);
        for t in rep.trace.windows(2) {
            // J_w is resolved to about 1e-15 in double precision
            prop_assert!(t[1].objective >= t[0].objective - 1e-14);
        }
    }

    #[test]
    fn solver_value_matches_evaluator(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ch = random_binary_channel(&mut r);
        let w = random_kernel(&mut r, &ch.s2, &bit("V2"));
        let inner = Case2Inner::new(&ch, &w).unwrap();
        let rep = inner.solve(1e-6, 5000);
        let joint = case2_joint(&ch, &w, &inner.q_kernel(&rep.q)).unwrap();
        let e = eval_cc(CcCase::TwoLb, &joint).unwrap();
        prop_assert!((e.objective - rep.value).abs() < 1e-9);
        prop_assert!((e.r_prime_required - r_w(&ch, &w).unwrap()).abs() < 1e-9);
        prop_assert!(e.max_violation() < 1e-10);
    }
}

#[test]
fn example1_curve_is_monotone_and_in_band() {
    let ch = example1(EXAMPLE1_EPSILON).unwrap();
    let opts = Case2Options::default();
    let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.1).collect();
    let curve = capacity_case2_curve(&ch, &grid, &opts).unwrap();
    for p in &curve {
        assert_eq!(p.status, PointStatus::Ok);
        let rw = p.r_w.unwrap();
        assert!(rw >= p.r_prime_used - p.epsilon && rw <= p.r_prime_used + BAND_TOL);
        assert!((r_w(&ch, p.w.as_ref().unwrap()).unwrap() - rw).abs() < 1e-12);
        assert!(p.value >= p.raw_value);
    }
    for w in curve.windows(2) {
        assert!(w[1].value >= w[0].value);
    }
    let oracle =
        gp_channel_capacity(&StrategyChannel::from_channel(&ch, false).unwrap(), &SolveOptions::default()).unwrap();
    assert!((curve[0].value - oracle.value).abs() < 5e-3);
}

#[test]
fn causal_curve_is_monotone_and_bounded_by_noncausal() {
    let ch = example1(EXAMPLE1_EPSILON).unwrap();
    let opts = Case2Options::default();
    let grid = [0.0, 0.4, 0.8, 1.2];
    let causal = capacity_case2_causal_curve(&ch, &grid, &opts).unwrap();
    let full = capacity_case2_curve(&ch, &grid, &opts).unwrap();
    for (c, f) in causal.iter().zip(&full) {
        assert_eq!(c.status, PointStatus::Ok);
        assert!(c.value <= f.value + 1e-6, "{} > {}", c.value, f.value);
    }
    for w in causal.windows(2) {
        assert!(w[1].value >= w[0].value);
    }
}

#[test]
fn sweeps_are_deterministic() {
    let ch = example1(EXAMPLE1_EPSILON).unwrap();
    let opts = Case2Options::default();
    let a = capacity_case2_curve(&ch, &[0.1, 0.5], &opts).unwrap();
    let b = capacity_case2_curve(&ch, &[0.1, 0.5], &opts).unwrap();
    assert_eq!(a, b);
}
