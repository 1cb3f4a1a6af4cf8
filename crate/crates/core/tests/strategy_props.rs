use std::collections::BTreeSet;

use proptest::prelude::*;
use sideinfo_core::strategy::{enumerate_strategies, enumerate_strategies_capped, lift_channel, lift_source};
use sideinfo_core::{Alphabet, ChannelInstance, CondKernel, Error, JointPmf, WzSource};

fn ab(label: &str, n: usize) -> Alphabet {
    Alphabet::new(label, n).unwrap()
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Every map `{0..n} -> {0..k}`, by counting in base `k`.
fn all_maps(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..k.pow(n as u32))
        .map(|mut c| {
            let mut f = vec![0; n];
            for slot in f.iter_mut().rev() {
                *slot = c % k;
                c /= k;
            }
            f
        })
        .collect()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn channel(nx: usize, ns1: usize, ns2: usize, ny: usize, w: &[f64]) -> ChannelInstance {
    let states = JointPmf::uniform(vec![ab("S1", ns1), ab("S2", ns2)]);
    let rows: Vec<f64> = w.chunks(ny).flat_map(normalized).collect();
    let kernel = CondKernel::new(vec![ab("X", nx), ab("S1", ns1), ab("S2", ns2)], vec![ab("Y", ny)], rows).unwrap();
    ChannelInstance::new(states, kernel).unwrap()
}

fn small_channel() -> impl Strategy<Value = (ChannelInstance, usize)> {
    (1usize..=3, 1usize..=2, 1usize..=2, 2usize..=3, 1usize..=2)
        .prop_filter("small strategy space", |&(nx, ns1, _, _, nv)| nx.pow((ns1 * nv) as u32) <= 81)
        .prop_flat_map(|(nx, ns1, ns2, ny, nv)| {
            prop::collection::vec(0.01f64..1.0, nx * ns1 * ns2 * ny)
                .prop_map(move |w| (channel(nx, ns1, ns2, ny, &w), nv))
        })
}

proptest! {
    #[test]
    fn channel_lifting_is_complete((ch, nv) in small_channel()) {
        let v = ab("V2", nv);
        let sp = enumerate_strategies(&[ch.s1.clone(), v.clone()], &ch.x).unwrap();
        let lifted = lift_channel(&ch, &sp).unwrap();
        let (ns1, ns2, ny) = (ch.s1.size(), ch.s2.size(), ch.y.size());
        let block = ns1 * ns2 * nv * ny;
        let from_lift: BTreeSet<Vec<u64>> = lifted.probs().chunks(block).map(bits).collect();
        let brute: BTreeSet<Vec<u64>> = all_maps(ns1 * nv, ch.x.size())
            .iter()
            .map(|f| {
                let mut rows = Vec::with_capacity(block);
                for s1 in 0..ns1 {
                    for s2 in 0..ns2 {
                        for v2 in 0..nv {
                            let x = f[s1 * nv + v2];
                            rows.extend((0..ny).map(|y| ch.p_y(y, x, s1, s2)));
                        }
                    }
                }
                bits(&rows)
            })
            .collect();
        prop_assert_eq!(sp.len(), brute.len());
        prop_assert_eq!(from_lift, brute);
    }

    #[test]
    fn lifting_reuses_rows_exactly((ch, nv) in small_channel()) {
        let sp = enumerate_strategies(&[ch.s1.clone(), ab("V2", nv)], &ch.x).unwrap();
        let lifted = lift_channel(&ch, &sp).unwrap();
        let originals: BTreeSet<Vec<u64>> = ch.kernel.probs().chunks(ch.y.size()).map(bits).collect();
        for row in lifted.probs().chunks(ch.y.size()) {
            prop_assert!(originals.contains(&bits(row)));
        }
    }

    #[test]
    fn source_lifting_is_complete(nx in 2usize..=3, ns in 1usize..=3, nxh in 2usize..=3) {
        let joint = JointPmf::uniform(vec![ab("X", nx), ab("S", ns)]);
        let d: Vec<f64> = (0..nx * nxh).map(|i| ((i * 7) % 5) as f64).collect();
        let src = WzSource::new(joint, ab("Xhat", nxh), d.clone()).unwrap();
        let sp = enumerate_strategies(std::slice::from_ref(&src.s), &src.xhat).unwrap();
        let lifted = lift_source(&src, &sp).unwrap();
        let from_lift: BTreeSet<Vec<u64>> = (0..sp.len())
            .map(|t| (0..nx).flat_map(|x| (0..ns).map(move |s| (x, s))).map(|(x, s)| lifted.get(x, t, s).to_bits()).collect())
            .collect();
        let brute: BTreeSet<Vec<u64>> = all_maps(ns, nxh)
            .iter()
            .map(|f| (0..nx).flat_map(|x| (0..ns).map(move |s| (x, s))).map(|(x, s)| d[x * nxh + f[s]].to_bits()).collect())
            .collect();
        prop_assert_eq!(from_lift, brute);
    }
}

#[test]
fn enumeration_cap_is_loud() {
    let err = enumerate_strategies(&[ab("S1", 4), ab("V2", 4)], &ab("X", 2)).unwrap_err();
    assert!(matches!(err, Error::Capacity { .. }));
    assert_eq!(enumerate_strategies_capped(&[ab("S", 3)], &ab("X", 2), 8).unwrap().len(), 8);
    assert!(enumerate_strategies_capped(&[ab("S", 3)], &ab("X", 2), 7).is_err());
}
