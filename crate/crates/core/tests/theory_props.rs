mod common;

use common::*;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use sideinfo_core::instance::hamming;
use sideinfo_core::theory::*;
use sideinfo_core::{Alphabet, Case, CondKernel, JointPmf};

fn ab(label: &str, n: usize) -> Alphabet {
    Alphabet::new(label, n).unwrap()
}

fn kernel(r: &mut ChaCha8Rng, given: &[&Alphabet], out: &Alphabet) -> CondKernel {
    let n: usize = given.iter().map(|a| a.size()).product();
    CondKernel::new(given.iter().map(|a| (*a).clone()).collect(), vec![out.clone()], rows(r, n, out.size())).unwrap()
}

/// `j` with an independent last axis of law `p`.
fn independent(j: &JointPmf, out: Alphabet, p: &[f64]) -> JointPmf {
    let k = j.axes().len();
    let mut axes = j.axes().to_vec();
    axes.push(out);
    JointPmf::from_fn(axes, |i| j.get(&i[..k]) * p[i[k]]).unwrap()
}

/// `(S1, S2, V, U, X, Y)` with `V | S2`, `U | (S1, V)`, `X | (U, S1, V)` and
/// `Y | (X, S1, S2)`. With `free_u` the input ignores `U`.
fn cc_joint(seed: u64, nv: usize, free_u: bool) -> JointPmf {
    let mut r = rng(seed);
    let (s1, s2, v, u, x, y) = (bit("S1"), bit("S2"), ab("V", nv), ab("U", 3), bit("X"), bit("Y"));
    let j = JointPmf::new(vec![s1.clone(), s2.clone()], simplex(&mut r, 4)).unwrap();
    let j = j.chain(&kernel(&mut r, &[&s2], &v), &[1]).unwrap();
    let j = if free_u {
        let p = simplex(&mut r, 3);
        independent(&j, u.clone(), &p)
    } else {
        j.chain(&kernel(&mut r, &[&s1, &v], &u), &[0, 2]).unwrap()
    };
    let j = if free_u {
        j.chain(&kernel(&mut r, &[&s1, &v], &x), &[0, 2]).unwrap()
    } else {
        j.chain(&kernel(&mut r, &[&u, &s1, &v], &x), &[3, 0, 2]).unwrap()
    };
    j.chain(&kernel(&mut r, &[&x, &s1, &s2], &y), &[4, 0, 1]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_built_joints_satisfy_their_chains(seed in any::<u64>()) {
        let r = eval_cc(CcCase::TwoLb, &cc_joint(seed, 2, false)).unwrap();
        prop_assert!(r.max_violation() < 1e-10, "{:?}", r.markov_violations);
        prop_assert!(r.r_prime_required >= -1e-12);
    }

    #[test]
    fn degenerate_v_collapses_the_bounds(seed in any::<u64>()) {
        let j = cc_joint(seed, 1, false);
        let lb = eval_cc(CcCase::TwoLb, &j).unwrap();
        prop_assert!(lb.r_prime_required.abs() < 1e-12);
        for c in [CcCase::One, CcCase::TwoUb1, CcCase::TwoUb2] {
            prop_assert!((eval_cc(c, &j).unwrap().objective - lb.objective).abs() < 1e-12);
        }
        let direct = j.mutual_information(&[3], &[5, 1], &[]).unwrap() - j.mutual_information(&[3], &[0], &[]).unwrap();
        prop_assert!((lb.objective - direct).abs() < 1e-12);
    }

    #[test]
    fn independent_auxiliary_carries_nothing(seed in any::<u64>()) {
        let j = cc_joint(seed, 2, true);
        for c in [CcCase::One, CcCase::TwoLb, CcCase::TwoUb1, CcCase::TwoUb2, CcCase::TwoC] {
            prop_assert!(eval_cc(c, &j).unwrap().objective.abs() < 1e-12);
        }
    }

    #[test]
    fn exact_reconstruction_has_zero_distortion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (x, s1, s2, v) = (bit("X"), bit("S1"), bit("S2"), bit("V"));
        let j = JointPmf::new(vec![x.clone(), s1.clone(), s2], simplex(&mut r, 8)).unwrap();
        let j = j.chain(&kernel(&mut r, &[&s1], &v), &[1]).unwrap();
        let copy = |label: &str| CondKernel::deterministic(vec![bit("X")], vec![bit(label)], |g| g[0]).unwrap();
        let j = j.chain(&copy("U"), &[0]).unwrap().chain(&copy("Xhat"), &[0]).unwrap();
        let d = hamming(2);
        let e = eval_sc(ScCase::One, &j, &d).unwrap();
        prop_assert_eq!(e.distortion, Some(0.0));
        let direct = j.mutual_information(&[0], &[4], &[2, 3]).unwrap();
        prop_assert!((e.objective - direct).abs() < 1e-12);
        prop_assert!(eval_sc(ScCase::OneC, &j, &d).unwrap().objective >= e.objective - 1e-12);
    }

    #[test]
    fn two_sided_bounds_collapse_with_a_trivial_description(seed in any::<u64>()) {
        let j = cc_joint(seed, 2, false);
        // (S1, S2, V1, V2, U, X, Y)
        let f = independent(&j, Alphabet::trivial("V1"), &[1.0]);
        let order = [0, 1, 6, 2, 3, 4, 5];
        let f = JointPmf::from_fn(order.iter().map(|&i| f.axes()[i].clone()).collect(), |idx| {
            let mut src = [0; 7];
            for (k, &i) in order.iter().enumerate() {
                src[i] = idx[k];
            }
            f.get(&src)
        })
        .unwrap();
        let fact = eval_fact(FactId::One, &f, None).unwrap();
        let lb = eval_cc(CcCase::TwoLb, &j).unwrap();
        prop_assert!((fact.objective - lb.objective).abs() < 1e-12);
        prop_assert!(fact.r_prime_required.abs() < 1e-12);
        let r2 = fact.r_prime_required_2.unwrap();
        let want = j.mutual_information(&[2], &[1], &[]).unwrap() - j.mutual_information(&[2], &[0], &[]).unwrap();
        prop_assert!((r2 - want).abs() < 1e-12);
        prop_assert!((r2 - lb.r_prime_required).abs() < 1e-12);
    }
}

#[test]
fn dualization_matches_the_table() {
    for c in Case::ALL {
        let d = descriptor(c);
        assert_eq!(dualize(&d), descriptor(dual_case(c)), "{c}");
        assert_eq!(dualize(&dualize(&d)), d);
        assert_ne!(d.sense, dualize(&d).sense);
    }
    assert_eq!(dualize(&descriptor(Case::Cc2c)).case, Case::Sc1c);
    assert_eq!(dualize(&descriptor(Case::Cc1)).case, Case::Sc2);
    assert_eq!(dual_case(Case::Cc2), Case::Sc1);
}

#[test]
fn closed_form_reference_points() {
    assert!((example2_closed_form(0.1, 0.2) - 0.3310).abs() < 5e-5);
    assert_eq!(example2_closed_form(0.5, 0.0), 0.0);
    assert_eq!(example2_closed_form(0.0, 0.0), 1.0);
}
