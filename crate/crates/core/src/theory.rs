//! Single-letter functionals of the capacity and rate-distortion expressions,
//! evaluated on explicit joint PMFs, and the channel/source duality map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::error::{arg, Error, Result};
use crate::prob::{binary_entropy, JointPmf};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovViolation {
    pub chain: String,
    /// Conditional mutual information across the chain, bits.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    /// Bits.
    pub objective: f64,
    /// Rate the side-information description needs, bits. For the
    /// two-sided bounds this is `R'_1`.
    pub r_prime_required: f64,
    /// `R'_2` of the two-sided bounds.
    pub r_prime_required_2: Option<f64>,
    /// `E d(X, X̂)` for source cases.
    pub distortion: Option<f64>,
    pub markov_violations: Vec<MarkovViolation>,
}

impl EvalResult {
    pub fn max_violation(&self) -> f64 {
        self.markov_violations.iter().map(|m| m.violation).fold(0.0, f64::max)
    }
}

macro_rules! parse_ids {
    ($ty:ident { $($name:literal => $var:ident),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($ty::$var => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let key: String = s.chars().filter(|c| !matches!(c, '-' | '_' | ' ')).flat_map(char::to_lowercase).collect();
                match key.as_str() {
                    $($name => Ok($ty::$var),)+
                    _ => Err(Error::Argument(format!("unknown {} {s:?}", stringify!($ty)))),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcCase {
    One,
    TwoLb,
    TwoUb1,
    TwoUb2,
    TwoC,
}

parse_ids!(CcCase { "1" => One, "2lb" => TwoLb, "2ub1" => TwoUb1, "2ub2" => TwoUb2, "2c" => TwoC });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScCase {
    One,
    OneC,
    Two,
}

parse_ids!(ScCase { "1" => One, "1c" => OneC, "2" => Two });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactId {
    One,
    Two,
}

parse_ids!(FactId { "1" => One, "2" => Two });

fn check_axes(joint: &JointPmf, n: usize, what: &str) -> Result<()> {
    if joint.axes().len() != n {
        return arg(format!("{what} evaluation needs a joint over {n} axes, got {}", joint.axes().len()));
    }
    Ok(())
}

fn mi(j: &JointPmf, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
    j.mutual_information(a, b, c).expect("axes validated by the caller")
}

fn chains(j: &JointPmf, names: &[&str], list: &[(&[usize], &[usize], &[usize])]) -> Vec<MarkovViolation> {
    let label = |ax: &[usize]| {
        let parts: Vec<&str> = ax.iter().map(|&i| names[i]).collect();
        if parts.len() == 1 {
            parts[0].to_string()
        } else {
            format!("({})", parts.join(","))
        }
    };
    list.iter()
        .map(|&(a, b, c)| MarkovViolation {
            chain: format!("{}-{}-{}", label(a), label(b), label(c)),
            violation: mi(j, a, c, b),
        })
        .collect()
}

const CC_NAMES: [&str; 6] = ["S1", "S2", "V", "U", "X", "Y"];
const SC_NAMES: [&str; 6] = ["X", "S1", "S2", "V", "U", "Xhat"];

/// Channel functionals on a joint over `(S1, S2, V, U, X, Y)`.
pub fn eval_cc(case: CcCase, joint: &JointPmf) -> Result<EvalResult> {
    check_axes(joint, 6, "channel")?;
    const S1: usize = 0;
    const S2: usize = 1;
    const V: usize = 2;
    const U: usize = 3;
    const X: usize = 4;
    const Y: usize = 5;
    let objective = match case {
        CcCase::TwoC => mi(joint, &[U], &[Y, S2], &[V]),
        _ => mi(joint, &[U], &[Y, S2], &[V]) - mi(joint, &[U], &[S1], &[V]),
    };
    let r_prime_required = match case {
        CcCase::One => mi(joint, &[V], &[S1], &[]) - mi(joint, &[V], &[Y, S2], &[]),
        CcCase::TwoC => mi(joint, &[V], &[S2], &[]),
        _ => mi(joint, &[V], &[S2], &[S1]),
    };
    let x_chain: (&[usize], &[usize], &[usize]) = (&[X], &[U, S1, V], &[S2]);
    let y_chain: (&[usize], &[usize], &[usize]) = (&[Y], &[X, S1, S2], &[U, V]);
    let list: Vec<(&[usize], &[usize], &[usize])> = match case {
        CcCase::One => vec![(&[V], &[S1], &[S2]), (&[U], &[S1, V], &[S2]), x_chain, y_chain],
        CcCase::TwoLb => vec![(&[V], &[S2], &[S1]), (&[U], &[S1, V], &[S2]), x_chain, y_chain],
        CcCase::TwoUb1 => vec![(&[U], &[S1, V], &[S2]), x_chain, y_chain],
        CcCase::TwoUb2 => vec![(&[V], &[S2], &[S1]), x_chain, y_chain],
        CcCase::TwoC => vec![(&[V], &[S2], &[S1]), (&[U], &[V], &[S1, S2]), x_chain, y_chain],
    };
    Ok(EvalResult {
        objective,
        r_prime_required,
        r_prime_required_2: None,
        distortion: None,
        markov_violations: chains(joint, &CC_NAMES, &list),
    })
}

fn expected_distortion(joint: &JointPmf, x: usize, xh: usize, d: &[f64]) -> Result<f64> {
    let pair = joint.marginalize(&[x, xh])?;
    let nxh = pair.axes()[1].size();
    if d.len() != pair.axes()[0].size() * nxh {
        return arg(format!("distortion table needs {} entries, got {}", pair.axes()[0].size() * nxh, d.len()));
    }
    Ok(pair.probs().iter().zip(d).map(|(p, d)| p * d).sum())
}

/// Source functionals on a joint over `(X, S1, S2, V, U, X̂)` with a
/// row-major distortion table `d(x, x̂)`.
pub fn eval_sc(case: ScCase, joint: &JointPmf, d: &[f64]) -> Result<EvalResult> {
    check_axes(joint, 6, "source")?;
    const X: usize = 0;
    const S1: usize = 1;
    const S2: usize = 2;
    const V: usize = 3;
    const U: usize = 4;
    const XH: usize = 5;
    let objective = match case {
        ScCase::OneC => mi(joint, &[U], &[X, S1], &[V]),
        _ => mi(joint, &[U], &[X, S1], &[V]) - mi(joint, &[U], &[S2], &[V]),
    };
    let r_prime_required = match case {
        ScCase::One => mi(joint, &[V], &[S1], &[S2]),
        ScCase::OneC => mi(joint, &[V], &[S1], &[]),
        ScCase::Two => mi(joint, &[V], &[S2], &[]) - mi(joint, &[V], &[X, S1], &[]),
    };
    let v_chain: (&[usize], &[usize], &[usize]) = match case {
        ScCase::Two => (&[V], &[S2], &[X, S1]),
        _ => (&[V], &[S1], &[X, S2]),
    };
    let list = [v_chain, (&[U], &[X, S1, V], &[S2]), (&[XH], &[U, S2, V], &[X, S1])];
    Ok(EvalResult {
        objective,
        r_prime_required,
        r_prime_required_2: None,
        distortion: Some(expected_distortion(joint, X, XH, d)?),
        markov_violations: chains(joint, &SC_NAMES, &list),
    })
}

/// Two-sided bounds. Fact 1 takes `(S1, S2, V1, V2, U, X, Y)`; Fact 2 takes
/// `(X, S1, S2, V1, V2, U, X̂)` and the distortion table.
pub fn eval_fact(fact: FactId, joint: &JointPmf, d: Option<&[f64]>) -> Result<EvalResult> {
    check_axes(joint, 7, "two-sided")?;
    match fact {
        FactId::One => {
            const S1: usize = 0;
            const S2: usize = 1;
            const V1: usize = 2;
            const V2: usize = 3;
            const U: usize = 4;
            const X: usize = 5;
            const Y: usize = 6;
            let names = ["S1", "S2", "V1", "V2", "U", "X", "Y"];
            let list: [(&[usize], &[usize], &[usize]); 5] = [
                (&[V1], &[S1], &[S2]),
                (&[V2], &[S2], &[S1, V1]),
                (&[U], &[S1, V1, V2], &[S2]),
                (&[X], &[U, S1, V1, V2], &[S2]),
                (&[Y], &[X, S1, S2], &[U, V1, V2]),
            ];
            Ok(EvalResult {
                objective: mi(joint, &[U], &[Y, S2], &[V1, V2]) - mi(joint, &[U], &[S1], &[V1, V2]),
                r_prime_required: mi(joint, &[V1], &[S1], &[]) - mi(joint, &[V1], &[Y, S2, V2], &[]),
                r_prime_required_2: Some(mi(joint, &[V2], &[S2], &[]) - mi(joint, &[V2], &[S1], &[])),
                distortion: None,
                markov_violations: chains(joint, &names, &list),
            })
        }
        FactId::Two => {
            const X: usize = 0;
            const S1: usize = 1;
            const S2: usize = 2;
            const V1: usize = 3;
            const V2: usize = 4;
            const U: usize = 5;
            const XH: usize = 6;
            let names = ["X", "S1", "S2", "V1", "V2", "U", "Xhat"];
            let list: [(&[usize], &[usize], &[usize]); 4] = [
                (&[V1], &[S1], &[X, S2]),
                (&[V2], &[S2], &[X, S1, V1]),
                (&[U], &[X, S1, V1, V2], &[S2]),
                (&[XH], &[U, S2, V1, V2], &[X, S1]),
            ];
            let distortion = match d {
                Some(d) => Some(expected_distortion(joint, X, XH, d)?),
                None => None,
            };
            Ok(EvalResult {
                objective: mi(joint, &[U], &[X, S1], &[V1, V2]) - mi(joint, &[U], &[S2], &[V1, V2]),
                r_prime_required: mi(joint, &[V1], &[S1], &[]) - mi(joint, &[V1], &[S2, V2], &[]),
                r_prime_required_2: Some(mi(joint, &[V2], &[S2], &[]) - mi(joint, &[V2], &[X, S1, V1], &[])),
                distortion,
                markov_violations: chains(joint, &names, &list),
            })
        }
    }
}

/// Rate of the XOR source with a rate-`R'` description: `max(1 - H(D) - R', 0)`.
pub fn example2_closed_form(dist: f64, r_prime: f64) -> f64 {
    (1.0 - binary_entropy(dist.clamp(0.0, 0.5)) - r_prime).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sym {
    X,
    Xhat,
    Y,
    S1,
    S2,
    V1,
    V2,
    U,
}

impl Sym {
    fn name(self) -> &'static str {
        match self {
            Sym::X => "X",
            Sym::Xhat => "Xhat",
            Sym::Y => "Y",
            Sym::S1 => "S1",
            Sym::S2 => "S2",
            Sym::V1 => "V1",
            Sym::V2 => "V2",
            Sym::U => "U",
        }
    }
}

/// `sign * I(a; b | c)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub sign: i8,
    pub a: Vec<Sym>,
    pub b: Vec<Sym>,
    pub c: Vec<Sym>,
}

impl Term {
    fn new(sign: i8, a: &[Sym], b: &[Sym], c: &[Sym]) -> Self {
        let sorted = |s: &[Sym]| {
            let mut v = s.to_vec();
            v.sort();
            v
        };
        Self { sign, a: sorted(a), b: sorted(b), c: sorted(c) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Max,
    Min,
}

/// Symbolic form of one coding case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub case: Case,
    pub sense: Sense,
    pub objective: Vec<Term>,
    pub r_prime: Vec<Term>,
}

fn fmt_terms(terms: &[Term]) -> String {
    let join = |s: &[Sym]| s.iter().map(|x| x.name()).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    for (i, t) in terms.iter().enumerate() {
        match (i, t.sign < 0) {
            (0, true) => out.push('-'),
            (_, true) => out.push_str(" - "),
            (0, false) => {}
            (_, false) => out.push_str(" + "),
        }
        out.push_str(&format!("I({};{}", join(&t.a), join(&t.b)));
        if !t.c.is_empty() {
            out.push_str(&format!("|{}", join(&t.c)));
        }
        out.push(')');
    }
    out
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sense = match self.sense {
            Sense::Max => "max",
            Sense::Min => "min",
        };
        write!(f, "{}: {sense} {} s.t. R' >= {}", self.case, fmt_terms(&self.objective), fmt_terms(&self.r_prime))
    }
}

/// Symbolic form of a case as stated in the coding theorems.
pub fn descriptor(case: Case) -> Descriptor {
    use Sym::*;
    let t = Term::new;
    let (sense, objective, r_prime) = match case {
        Case::Cc1 => (
            Sense::Max,
            vec![t(1, &[U], &[Y, S2], &[V1]), t(-1, &[U], &[S1], &[V1])],
            vec![t(1, &[V1], &[S1], &[]), t(-1, &[V1], &[Y, S2], &[])],
        ),
        Case::Cc2 => {
            (Sense::Max, vec![t(1, &[U], &[Y, S2], &[V2]), t(-1, &[U], &[S1], &[V2])], vec![t(1, &[V2], &[S2], &[S1])])
        }
        Case::Cc2c => (Sense::Max, vec![t(1, &[U], &[Y, S2], &[V2])], vec![t(1, &[V2], &[S2], &[])]),
        Case::Sc1 => {
            (Sense::Min, vec![t(1, &[U], &[X, S1], &[V1]), t(-1, &[U], &[S2], &[V1])], vec![t(1, &[V1], &[S1], &[S2])])
        }
        Case::Sc1c => (Sense::Min, vec![t(1, &[U], &[X, S1], &[V1])], vec![t(1, &[V1], &[S1], &[])]),
        Case::Sc2 => (
            Sense::Min,
            vec![t(1, &[U], &[X, S1], &[V2]), t(-1, &[U], &[S2], &[V2])],
            vec![t(1, &[V2], &[S2], &[]), t(-1, &[V2], &[X, S1], &[])],
        ),
    };
    Descriptor { case, sense, objective, r_prime }
}

pub fn dual_case(case: Case) -> Case {
    match case {
        Case::Cc1 => Case::Sc2,
        Case::Cc2 => Case::Sc1,
        Case::Cc2c => Case::Sc1c,
        Case::Sc2 => Case::Cc1,
        Case::Sc1 => Case::Cc2,
        Case::Sc1c => Case::Cc2c,
    }
}

/// Relabels a descriptor into its dual: `X <-> X̂`, `Y <-> X`, `S_j <-> S_j̄`,
/// `V_j <-> V_j̄`, max <-> min. Purely syntactic.
pub fn dualize(desc: &Descriptor) -> Descriptor {
    let from_channel = desc.case.is_channel();
    let map = |s: Sym| match (s, from_channel) {
        (Sym::X, true) => Sym::Xhat,
        (Sym::Y, true) => Sym::X,
        (Sym::Xhat, false) => Sym::X,
        (Sym::X, false) => Sym::Y,
        (Sym::S1, _) => Sym::S2,
        (Sym::S2, _) => Sym::S1,
        (Sym::V1, _) => Sym::V2,
        (Sym::V2, _) => Sym::V1,
        (other, _) => other,
    };
    let terms = |ts: &[Term]| {
        ts.iter()
            .map(|t| {
                let m = |s: &[Sym]| s.iter().copied().map(map).collect::<Vec<_>>();
                Term::new(t.sign, &m(&t.a), &m(&t.b), &m(&t.c))
            })
            .collect()
    };
    Descriptor {
        case: dual_case(desc.case),
        sense: match desc.sense {
            Sense::Max => Sense::Min,
            Sense::Min => Sense::Max,
        },
        objective: terms(&desc.objective),
        r_prime: terms(&desc.r_prime),
    }
}
