//! Shannon strategies: deterministic maps from state symbols to inputs or
//! reconstructions, and the lifting of channels and sources onto them.

use serde::Serialize;

use crate::case::Case;
use crate::error::{arg, Error, Result};
use crate::instance::{ChannelInstance, WzSource};
use crate::prob::{shape_of, Alphabet, CondKernel};

/// Default bound on the number of enumerated strategies.
pub const STRATEGY_CAP: u64 = 4096;

/// Every map from the product of `domain_axes` to `codomain`.
///
/// Strategy `t` is read as a base-`|codomain|` numeral whose digits are the
/// images of the domain points in lexicographic order, most significant
/// first, so the image of the last domain point varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategySpace {
    domain_axes: Vec<Alphabet>,
    codomain: Alphabet,
    domain_len: usize,
    /// `tables[t * domain_len + d]` is the image of flat domain point `d`.
    tables: Vec<usize>,
}

impl StrategySpace {
    pub fn len(&self) -> usize {
        self.tables.len() / self.domain_len
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn domain_axes(&self) -> &[Alphabet] {
        &self.domain_axes
    }

    pub fn codomain(&self) -> &Alphabet {
        &self.codomain
    }

    pub fn domain_len(&self) -> usize {
        self.domain_len
    }

    /// Image of flat domain point `d` under strategy `t`.
    #[inline]
    pub fn apply(&self, t: usize, d: usize) -> usize {
        self.tables[t * self.domain_len + d]
    }

    pub fn table(&self, t: usize) -> &[usize] {
        &self.tables[t * self.domain_len..(t + 1) * self.domain_len]
    }

    /// Alphabet whose symbols are the strategies.
    pub fn alphabet(&self, label: &str) -> Alphabet {
        Alphabet::new(label, self.len()).expect("at least one strategy")
    }
}

pub fn enumerate_strategies(domain_axes: &[Alphabet], codomain: &Alphabet) -> Result<StrategySpace> {
    enumerate_strategies_capped(domain_axes, codomain, STRATEGY_CAP)
}

pub fn enumerate_strategies_capped(domain_axes: &[Alphabet], codomain: &Alphabet, cap: u64) -> Result<StrategySpace> {
    let domain_len: usize = shape_of(domain_axes).iter().product();
    let k = codomain.size() as u64;
    let count = u32::try_from(domain_len)
        .ok()
        .and_then(|n| k.checked_pow(n))
        .filter(|&c| c <= cap)
        .ok_or_else(|| Error::Capacity { required: format!("{k}^{domain_len}"), cap })? as usize;
    let mut tables = Vec::with_capacity(count * domain_len);
    let mut digits = vec![0usize; domain_len];
    for _ in 0..count {
        tables.extend_from_slice(&digits);
        for d in (0..domain_len).rev() {
            digits[d] += 1;
            if digits[d] < codomain.size() {
                break;
            }
            digits[d] = 0;
        }
    }
    Ok(StrategySpace { domain_axes: domain_axes.to_vec(), codomain: codomain.clone(), domain_len, tables })
}

/// Lifts `p(y|x,s1,s2)` to `p(y|t,s1,s2,v2) = p(y | t(s1,v2), s1, s2)` for
/// strategies over `S1 x V2 -> X`. The kernel's given axes are
/// `(T, S1, S2, V2)`.
pub fn lift_channel(ch: &ChannelInstance, strategies: &StrategySpace) -> Result<CondKernel> {
    let (ns1, nv2) = match strategies.domain_axes() {
        [a, b] => (a.size(), b.size()),
        _ => return arg("channel strategies must be defined on (S1, V2)"),
    };
    if ns1 != ch.s1.size() || strategies.codomain().size() != ch.x.size() {
        return arg("strategy alphabets do not match the channel's S1 and X");
    }
    let ns2 = ch.s2.size();
    let ny = ch.y.size();
    let mut probs = Vec::with_capacity(strategies.len() * ns1 * ns2 * nv2 * ny);
    for t in 0..strategies.len() {
        for s1 in 0..ns1 {
            for s2 in 0..ns2 {
                for v2 in 0..nv2 {
                    let x = strategies.apply(t, s1 * nv2 + v2);
                    let g = (x * ns1 + s1) * ns2 + s2;
                    probs.extend_from_slice(ch.kernel.slice(g));
                }
            }
        }
    }
    let v2 = strategies.domain_axes()[1].clone();
    Ok(CondKernel::from_rows_unchecked(
        vec![strategies.alphabet("T"), ch.s1.clone(), ch.s2.clone(), v2],
        vec![ch.y.clone()],
        probs,
    ))
}

/// Distortion `d(x, t(s))` indexed `(x, t, s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftedDistortion {
    pub nx: usize,
    pub nt: usize,
    pub ns: usize,
    pub values: Vec<f64>,
}

impl LiftedDistortion {
    #[inline]
    pub fn get(&self, x: usize, t: usize, s: usize) -> f64 {
        self.values[(x * self.nt + t) * self.ns + s]
    }
}

/// Lifts the distortion measure onto strategies `S -> X̂`.
pub fn lift_source(src: &WzSource, strategies: &StrategySpace) -> Result<LiftedDistortion> {
    if strategies.domain_len() != src.s.size() || strategies.codomain().size() != src.xhat.size() {
        return arg("strategies must map the side-information alphabet into the reconstruction alphabet");
    }
    let (nx, nt, ns) = (src.x.size(), strategies.len(), src.s.size());
    let mut values = Vec::with_capacity(nx * nt * ns);
    for x in 0..nx {
        for t in 0..nt {
            for s in 0..ns {
                values.push(src.d(x, strategies.apply(t, s)));
            }
        }
    }
    Ok(LiftedDistortion { nx, nt, ns, values })
}

/// Alphabet sizes entering the auxiliary cardinality bounds. For source
/// cases `x` is the source alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CardinalitySizes {
    pub x: usize,
    pub s1: usize,
    pub s2: usize,
}

/// `(|V| bound, |U| bound)` sufficient for the single-letter regions.
pub fn cardinality_bounds(case: Case, sizes: CardinalitySizes) -> (usize, usize) {
    let CardinalitySizes { x, s1, s2 } = sizes;
    let v = match case {
        Case::Cc1 | Case::Sc2 => x * s1 * s2 + 1,
        Case::Cc2 | Case::Sc1 => s1 * s2 + 1,
        Case::Cc2c => s2 + 1,
        Case::Sc1c => s1 + 1,
    };
    let u = match case {
        Case::Cc2c => x * s2 * v,
        Case::Sc1c => x * s1 * v,
        _ => x * s1 * s2 * v,
    };
    (v, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{example1, example3_wz, hamming};
    use crate::prob::JointPmf;

    fn ab(label: &str, n: usize) -> Alphabet {
        Alphabet::new(label, n).unwrap()
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_strategies(&[ab("S", 2)], &ab("X", 2)).unwrap().len(), 4);
        assert_eq!(enumerate_strategies(&[ab("S1", 2), ab("V2", 2)], &ab("X", 2)).unwrap().len(), 16);
        assert_eq!(enumerate_strategies(&[ab("S", 2)], &ab("Xh", 3)).unwrap().len(), 9);
        let err = enumerate_strategies(&[ab("S1", 4), ab("V2", 4)], &ab("X", 2)).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }

    #[test]
    fn enumeration_order_and_uniqueness() {
        let sp = enumerate_strategies(&[ab("S", 2)], &ab("Xh", 3)).unwrap();
        assert_eq!(sp.table(0), &[0, 0]);
        assert_eq!(sp.table(1), &[0, 1]);
        assert_eq!(sp.table(3), &[1, 0]);
        let mut seen: Vec<&[usize]> = (0..sp.len()).map(|t| sp.table(t)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn lift_noiseless_channel() {
        let states = JointPmf::uniform(vec![ab("S1", 2), ab("S2", 2)]);
        let kernel =
            CondKernel::deterministic(vec![ab("X", 2), ab("S1", 2), ab("S2", 2)], vec![ab("Y", 2)], |g| g[0]).unwrap();
        let ch = ChannelInstance::new(states, kernel).unwrap();
        let sp = enumerate_strategies(&[ab("S1", 2), ab("V2", 2)], &ab("X", 2)).unwrap();
        let lifted = lift_channel(&ch, &sp).unwrap();
        for t in 0..16 {
            for s1 in 0..2 {
                for s2 in 0..2 {
                    for v2 in 0..2 {
                        let g = ((t * 2 + s1) * 2 + s2) * 2 + v2;
                        let y = sp.apply(t, s1 * 2 + v2);
                        assert_eq!(lifted.get(g, y), 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn lift_matches_substitution() {
        let ch = example1(0.1).unwrap();
        let sp = enumerate_strategies(&[ab("S1", 2), ab("V2", 2)], &ab("X", 2)).unwrap();
        let lifted = lift_channel(&ch, &sp).unwrap();
        for t in 0..16 {
            let table = sp.table(t);
            for s1 in 0..2 {
                for s2 in 0..2 {
                    for v2 in 0..2 {
                        let g = ((t * 2 + s1) * 2 + s2) * 2 + v2;
                        for y in 0..2 {
                            assert_eq!(lifted.get(g, y), ch.p_y(y, table[s1 * 2 + v2], s1, s2));
                        }
                        if t == 0 {
                            assert_eq!(lifted.slice(g), &[ch.p_y(0, 0, s1, s2), ch.p_y(1, 0, s1, s2)]);
                        }
                    }
                }
            }
        }
        let bad = enumerate_strategies(&[ab("S1", 3), ab("V2", 2)], &ab("X", 2)).unwrap();
        assert!(lift_channel(&ch, &bad).is_err());
    }

    #[test]
    fn lift_source_tables() {
        let src = example3_wz();
        let sp = enumerate_strategies(std::slice::from_ref(&src.s), &src.xhat).unwrap();
        let d = lift_source(&src, &sp).unwrap();
        let identity = (0..sp.len()).find(|&t| sp.table(t) == [0, 1]).unwrap();
        let zero = 0;
        let ham = hamming(2);
        for x in 0..2 {
            for s in 0..2 {
                assert_eq!(d.get(x, identity, s), if x == s { 0.0 } else { 1.0 });
                assert_eq!(d.get(x, zero, s), src.d(x, 0));
                for t in 0..4 {
                    assert_eq!(d.get(x, t, s), ham[x * 2 + sp.apply(t, s)]);
                }
            }
        }
    }

    #[test]
    fn cardinality_examples() {
        let bin = CardinalitySizes { x: 2, s1: 2, s2: 2 };
        assert_eq!(cardinality_bounds(Case::Cc2, bin), (5, 40));
        assert_eq!(cardinality_bounds(Case::Cc2c, bin), (3, 12));
        assert_eq!(cardinality_bounds(Case::Sc1c, bin), (3, 12));
        assert_eq!(cardinality_bounds(Case::Cc1, bin), (9, 72));
        assert_eq!(cardinality_bounds(Case::Sc1, bin), (5, 40));
        assert_eq!(cardinality_bounds(Case::Sc2, bin), (9, 72));
    }
}
