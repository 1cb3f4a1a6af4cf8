//! Problem instances: state-dependent channels, sources with two-sided side
//! information, and the built-in examples.

use serde::Serialize;

use crate::error::{arg, Result};
use crate::prob::{Alphabet, CondKernel, JointPmf};

/// Channel `p(y|x,s1,s2)` driven by the state pair `(S1, S2)`. The encoder
/// sees `S1`, the decoder sees `S2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelInstance {
    pub x: Alphabet,
    pub y: Alphabet,
    pub s1: Alphabet,
    pub s2: Alphabet,
    /// Axes `(S1, S2)`.
    pub state_joint: JointPmf,
    /// Given `(X, S1, S2)`, out `(Y)`.
    pub kernel: CondKernel,
}

impl ChannelInstance {
    pub fn new(state_joint: JointPmf, kernel: CondKernel) -> Result<Self> {
        let [s1, s2] = match state_joint.axes() {
            [a, b] => [a.clone(), b.clone()],
            _ => return arg("channel state joint must have axes (S1, S2)"),
        };
        let (x, ks1, ks2) = match kernel.given_axes() {
            [x, a, b] => (x.clone(), a, b),
            _ => return arg("channel kernel must be conditioned on (X, S1, S2)"),
        };
        if ks1.size() != s1.size() || ks2.size() != s2.size() {
            return arg("channel kernel state alphabets differ from the state joint");
        }
        let y = match kernel.out_axes() {
            [y] => y.clone(),
            _ => return arg("channel kernel must have a single output axis"),
        };
        Ok(Self { x, y, s1, s2, state_joint, kernel })
    }

    /// `p(y | x, s1, s2)` by symbol.
    pub fn p_y(&self, y: usize, x: usize, s1: usize, s2: usize) -> f64 {
        let g = (x * self.s1.size() + s1) * self.s2.size() + s2;
        self.kernel.get(g, y)
    }

    pub fn p_s(&self, s1: usize, s2: usize) -> f64 {
        self.state_joint.probs()[s1 * self.s2.size() + s2]
    }
}

/// Source `p(x,s1,s2)` with distortion `d(x, x̂)`. The encoder sees `S1`,
/// the decoder sees `S2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceInstance {
    pub x: Alphabet,
    pub xhat: Alphabet,
    pub s1: Alphabet,
    pub s2: Alphabet,
    /// Axes `(X, S1, S2)`.
    pub joint: JointPmf,
    /// Row-major `|X| x |X̂|`.
    pub distortion: Vec<f64>,
}

fn check_distortion(d: &[f64], nx: usize, nxh: usize) -> Result<()> {
    if d.len() != nx * nxh {
        return arg(format!("distortion table needs {} entries, got {}", nx * nxh, d.len()));
    }
    if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return arg("distortion entries must be finite and nonnegative");
    }
    Ok(())
}

impl SourceInstance {
    pub fn new(joint: JointPmf, xhat: Alphabet, distortion: Vec<f64>) -> Result<Self> {
        let [x, s1, s2] = match joint.axes() {
            [a, b, c] => [a.clone(), b.clone(), c.clone()],
            _ => return arg("source joint must have axes (X, S1, S2)"),
        };
        check_distortion(&distortion, x.size(), xhat.size())?;
        Ok(Self { x, xhat, s1, s2, joint, distortion })
    }

    pub fn d(&self, x: usize, xh: usize) -> f64 {
        self.distortion[x * self.xhat.size() + xh]
    }

    /// Wyner-Ziv view: the pair `(X, S1)` is the source, `S2` the decoder's
    /// side information. The pair index is `x * |S1| + s1`.
    pub fn pair_source(&self) -> WzSource {
        let ns1 = self.s1.size();
        let pair =
            Alphabet::new(format!("{}{}", self.x.label(), self.s1.label()), self.x.size() * ns1).expect("nonempty");
        let joint = self.joint.reshape(vec![pair.clone(), self.s2.clone()]).expect("same cells as the source joint");
        let mut distortion = Vec::with_capacity(pair.size() * self.xhat.size());
        for xs in 0..pair.size() {
            for xh in 0..self.xhat.size() {
                distortion.push(self.d(xs / ns1, xh));
            }
        }
        WzSource { x: pair, s: self.s2.clone(), xhat: self.xhat.clone(), joint, distortion }
    }
}

/// Source `p(x,s)` whose decoder alone observes `S`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WzSource {
    pub x: Alphabet,
    pub s: Alphabet,
    pub xhat: Alphabet,
    /// Axes `(X, S)`.
    pub joint: JointPmf,
    /// Row-major `|X| x |X̂|`.
    pub distortion: Vec<f64>,
}

impl WzSource {
    pub fn new(joint: JointPmf, xhat: Alphabet, distortion: Vec<f64>) -> Result<Self> {
        let [x, s] = match joint.axes() {
            [a, b] => [a.clone(), b.clone()],
            _ => return arg("side-information source joint must have axes (X, S)"),
        };
        check_distortion(&distortion, x.size(), xhat.size())?;
        Ok(Self { x, s, xhat, joint, distortion })
    }

    pub fn d(&self, x: usize, xh: usize) -> f64 {
        self.distortion[x * self.xhat.size() + xh]
    }

    pub fn p(&self, x: usize, s: usize) -> f64 {
        self.joint.probs()[x * self.s.size() + s]
    }

    pub fn p_x(&self) -> Vec<f64> {
        self.joint.marginalize(&[0]).expect("axis 0 exists").probs().to_vec()
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect()
}

fn bit(label: &str) -> Alphabet {
    Alphabet::new(label, 2).expect("size 2")
}

/// Default crossover of the Z- and S-channels in the first example.
pub const EXAMPLE1_EPSILON: f64 = 0.1;

/// Binary channel whose law depends on the state pair: an inverting channel
/// at `(0,0)`, an S-channel at `(0,1)`, a Z-channel at `(1,0)` and a noiseless
/// channel at `(1,1)`. The states are correlated with `Pr{S1 != S2} = 0.8`.
pub fn example1(epsilon: f64) -> Result<ChannelInstance> {
    if !(0.0..=1.0).contains(&epsilon) {
        return arg(format!("crossover {epsilon} outside [0, 1]"));
    }
    let states = JointPmf::new(vec![bit("S1"), bit("S2")], vec![0.1, 0.4, 0.4, 0.1])?;
    let kernel = CondKernel::from_fn(vec![bit("X"), bit("S1"), bit("S2")], vec![bit("Y")], |g, o| {
        let (x, y) = (g[0], o[0]);
        let p_one = match (g[1], g[2]) {
            (0, 0) => 1.0 - x as f64,
            // 1 -> 1, 0 -> 1 with probability epsilon
            (0, 1) => {
                if x == 1 {
                    1.0
                } else {
                    epsilon
                }
            }
            // 0 -> 0, 1 -> 0 with probability epsilon
            (1, 0) => {
                if x == 0 {
                    0.0
                } else {
                    1.0 - epsilon
                }
            }
            _ => x as f64,
        };
        if y == 1 {
            p_one
        } else {
            1.0 - p_one
        }
    })?;
    ChannelInstance::new(states, kernel)
}

/// `X = S1 xor S2` with independent uniform states, Hamming distortion.
pub fn example2() -> SourceInstance {
    let joint =
        JointPmf::from_fn(vec![bit("X"), bit("S1"), bit("S2")], |i| if i[0] == i[1] ^ i[2] { 0.25 } else { 0.0 })
            .expect("valid pmf");
    SourceInstance::new(joint, bit("Xhat"), hamming(2)).expect("valid source")
}

/// Uniform binary `X` observed by the decoder through a BSC(0.3); the encoder
/// has no side information.
pub fn example3() -> SourceInstance {
    let joint = JointPmf::from_fn(vec![bit("X"), Alphabet::trivial("S1"), bit("S2")], |i| {
        0.5 * if i[0] == i[2] { 0.7 } else { 0.3 }
    })
    .expect("valid pmf");
    SourceInstance::new(joint, bit("Xhat"), hamming(2)).expect("valid source")
}

/// Crossovers of the two noise processes in the fourth example.
pub const EXAMPLE4_Z: [f64; 2] = [0.3, 0.001];

/// `X = S1 xor Z_{S2}` with independent uniform states, `Z0 ~ Bern(0.3)` and
/// `Z1 ~ Bern(0.001)`, Hamming distortion.
pub fn example4() -> SourceInstance {
    let joint = JointPmf::from_fn(vec![bit("X"), bit("S1"), bit("S2")], |i| {
        let z = EXAMPLE4_Z[i[2]];
        0.25 * if i[0] ^ i[1] == 1 { z } else { 1.0 - z }
    })
    .expect("valid pmf");
    SourceInstance::new(joint, bit("Xhat"), hamming(2)).expect("valid source")
}

/// Side-information view of [`example3`].
pub fn example3_wz() -> WzSource {
    let src = example3();
    let joint = src.joint.marginalize(&[0, 2]).expect("axes exist");
    WzSource::new(joint, src.xhat.clone(), src.distortion.clone()).expect("valid source")
}
