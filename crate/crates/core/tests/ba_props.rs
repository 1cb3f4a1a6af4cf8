use proptest::prelude::*;
use sideinfo_core::ba::*;
use sideinfo_core::instance::hamming;
use sideinfo_core::prob::binary_entropy;
use sideinfo_core::{Alphabet, CondKernel, JointPmf, WzSource};

fn ab(label: &str, n: usize) -> Alphabet {
    Alphabet::new(label, n).unwrap()
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn kernel() -> impl Strategy<Value = CondKernel> {
    (2usize..=4, 2usize..=4).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(0.001f64..1.0, nx * ny).prop_map(move |w| {
            let rows: Vec<f64> = w.chunks(ny).flat_map(normalized).collect();
            CondKernel::new(vec![ab("X", nx)], vec![ab("Y", ny)], rows).unwrap()
        })
    })
}

fn wz_source() -> impl Strategy<Value = WzSource> {
    (2usize..=3, 1usize..=3).prop_flat_map(|(nx, ns)| {
        (prop::collection::vec(0.01f64..1.0, nx * ns), prop::collection::vec(0.0f64..1.0, nx * nx)).prop_map(
            move |(w, d)| {
                let joint = JointPmf::new(vec![ab("X", nx), ab("S", ns)], normalized(&w)).unwrap();
                // zero diagonal keeps a zero-distortion reconstruction
                let d: Vec<f64> =
                    d.iter().enumerate().map(|(i, v)| if i / nx == i % nx { 0.0 } else { v + 0.1 }).collect();
                WzSource::new(joint, ab("Xhat", nx), d).unwrap()
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn capacity_trace_is_nondecreasing_and_bracketed(k in kernel()) {
        let r = ba_capacity(&k, &SolveOptions::default()).unwrap();
        prop_assert!(r.converged);
        for w in r.trace.windows(2) {
            prop_assert!(w[1].objective >= w[0].objective);
        }
        for t in &r.trace {
            prop_assert!(t.bound >= r.value - 1e-12);
        }
        prop_assert!(r.gap <= 1e-6);
    }

    #[test]
    fn bsc_bracket_contains_closed_form(p in 0.0f64..0.5) {
        let k = CondKernel::new(vec![ab("X", 2)], vec![ab("Y", 2)], vec![1.0 - p, p, p, 1.0 - p]).unwrap();
        let r = ba_capacity(&k, &SolveOptions::default()).unwrap();
        let c = 1.0 - binary_entropy(p);
        prop_assert!(r.value <= c + 1e-12 && c <= r.value + r.gap + 1e-12);
    }

    #[test]
    fn hamming_bracket_contains_closed_form(p in 0.05f64..0.5, frac in 0.0f64..0.95) {
        let d = frac * p;
        let r = ba_rate_distortion(&[1.0 - p, p], &hamming(2), 2, d, &SolveOptions::default()).unwrap();
        let exact = binary_entropy(p) - binary_entropy(d);
        prop_assert!(r.value >= exact - 1e-12 && exact >= r.value - r.gap - 1e-12, "{} {} {}", r.value, r.gap, exact);
        for w in r.trace.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective);
        }
    }

    #[test]
    fn wz_trace_is_nonincreasing(src in wz_source(), d in 0.0f64..0.3) {
        let r = wz_primal(&src, d, &SolveOptions::default()).unwrap();
        for w in r.trace.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective);
        }
    }

    #[test]
    fn trivial_side_information_is_classic(w in prop::collection::vec(0.01f64..1.0, 3), d in 0.0f64..0.6) {
        let px = normalized(&w);
        let dist = hamming(3);
        let joint = JointPmf::new(vec![ab("X", 3), Alphabet::trivial("S")], px.clone()).unwrap();
        let src = WzSource::new(joint, ab("Xhat", 3), dist.clone()).unwrap();
        let opts = SolveOptions::default();
        let a = wz_primal(&src, d, &opts).unwrap().value;
        let b = ba_rate_distortion(&px, &dist, 3, d, &opts).unwrap().value;
        prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn wz_is_nonincreasing_and_convex(src in wz_source()) {
        let opts = SolveOptions::default();
        let grid: Vec<f64> = (0..=4).map(|i| i as f64 * 0.1).collect();
        let r: Vec<f64> = grid.iter().map(|&d| wz_primal(&src, d, &opts).unwrap().value).collect();
        for w in r.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-6);
        }
        for w in r.windows(3) {
            prop_assert!(w[1] <= (w[0] + w[2]) / 2.0 + 1e-6);
        }
    }
}
