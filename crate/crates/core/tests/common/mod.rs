#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sideinfo_core::{Alphabet, ChannelInstance, CondKernel, JointPmf, SourceInstance, WzSource};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive point of the simplex, roughly uniform.
pub fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// `rows` independent simplex points of length `n`, concatenated.
pub fn rows(rng: &mut impl Rng, rows: usize, n: usize) -> Vec<f64> {
    (0..rows).flat_map(|_| simplex(rng, n)).collect()
}

pub fn bit(label: &str) -> Alphabet {
    Alphabet::new(label, 2).unwrap()
}

pub fn random_binary_channel(rng: &mut impl Rng) -> ChannelInstance {
    let states = JointPmf::new(vec![bit("S1"), bit("S2")], simplex(rng, 4)).unwrap();
    let kernel = CondKernel::new(vec![bit("X"), bit("S1"), bit("S2")], vec![bit("Y")], rows(rng, 8, 2)).unwrap();
    ChannelInstance::new(states, kernel).unwrap()
}

pub fn random_kernel(rng: &mut impl Rng, given: &Alphabet, out: &Alphabet) -> CondKernel {
    CondKernel::new(vec![given.clone()], vec![out.clone()], rows(rng, given.size(), out.size())).unwrap()
}

pub fn point_mass(given: &Alphabet, label: &str) -> CondKernel {
    CondKernel::uniform(vec![given.clone()], vec![Alphabet::trivial(label)])
}

/// `(X, S1)` as the source and `S2` as decoder side information.
pub fn pair_source(src: &SourceInstance) -> WzSource {
    let (nx, ns1, nxh) = (src.x.size(), src.s1.size(), src.xhat.size());
    let pair = Alphabet::new("XS1", nx * ns1).unwrap();
    let joint = src.joint.reshape(vec![pair, src.s2.clone()]).unwrap();
    let d = (0..nx * ns1)
        .flat_map(|a| (0..nxh).map(move |xh| (a / ns1, xh)))
        .map(|(x, xh)| src.distortion[x * nxh + xh])
        .collect();
    WzSource::new(joint, src.xhat.clone(), d).unwrap()
}
