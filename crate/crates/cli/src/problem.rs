//! JSON problem files.
//!
//! A file either names a built-in instance or spells one out as flat
//! row-major tables whose axis order is declared next to the values:
//!
//! ```json
//! {
//!   "kind": "channel",
//!   "alphabets": { "X": 2, "Y": 2, "S1": 2, "S2": 2 },
//!   "joint": { "axes": ["S1", "S2"], "values": [0.1, 0.4, 0.4, 0.1] },
//!   "kernel": { "given": ["X", "S1", "S2"], "out": ["Y"], "values": [...] }
//! }
//! ```
//!
//! Sources use `"kind": "source"`, a joint over `X`, `S1`, `S2` and a
//! `"distortion"` table over `X`, `Xhat`. A state axis missing from
//! `alphabets` has size one and may be left out of the tables.

use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};
use sideinfo_core::instance::{example1, example2, example3, example4, EXAMPLE1_EPSILON};
use sideinfo_core::{Alphabet, ChannelInstance, CondKernel, JointPmf, SourceInstance};

pub const BUILTINS: [&str; 4] = ["example1", "example2", "example3", "example4"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Channel,
    Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub axes: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTable {
    pub given: Vec<String>,
    pub out: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Crossover of the first example.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alphabets: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<Table>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Channel(ChannelInstance),
    Source(SourceInstance),
}

impl Problem {
    pub fn kind(&self) -> Kind {
        match self {
            Problem::Channel(_) => Kind::Channel,
            Problem::Source(_) => Kind::Source,
        }
    }
}

/// Reads `builtin:<name>` or a path to a problem file.
pub fn load(spec: &str) -> Result<Problem, String> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin(name, None);
    }
    let text = fs::read_to_string(spec).map_err(|e| format!("cannot read {spec}: {e}"))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Problem, String> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| format!("malformed problem file: {e}"))?;
    file.into_problem()
}

pub fn builtin(name: &str, epsilon: Option<f64>) -> Result<Problem, String> {
    if epsilon.is_some() && name != "example1" {
        return Err(format!("epsilon only applies to example1, not {name}"));
    }
    Ok(match name {
        "example1" => Problem::Channel(example1(epsilon.unwrap_or(EXAMPLE1_EPSILON)).map_err(|e| e.to_string())?),
        "example2" => Problem::Source(example2()),
        "example3" => Problem::Source(example3()),
        "example4" => Problem::Source(example4()),
        _ => return Err(format!("unknown builtin {name:?}, expected one of {}", BUILTINS.join(", "))),
    })
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<Problem, String> {
        if let Some(name) = &self.builtin {
            if self.kind.is_some()
                || !self.alphabets.is_empty()
                || self.joint.is_some()
                || self.kernel.is_some()
                || self.distortion.is_some()
            {
                return Err("a builtin problem takes no tables".into());
            }
            return builtin(name, self.epsilon);
        }
        if self.epsilon.is_some() {
            return Err("epsilon only applies to builtin:example1".into());
        }
        let kind = self.kind.ok_or("problem file needs \"kind\" or \"builtin\"")?;
        let joint = self.joint.as_ref().ok_or("problem file needs a \"joint\" table")?;
        match kind {
            Kind::Channel => {
                if self.distortion.is_some() {
                    return Err("a channel takes no distortion table".into());
                }
                let k = self.kernel.as_ref().ok_or("a channel needs a \"kernel\" table")?;
                if k.out != ["Y"] {
                    return Err(format!("channel kernel output must be [\"Y\"], got {:?}", k.out));
                }
                let (x, y, s1, s2) = (self.axis("X")?, self.axis("Y")?, self.axis("S1")?, self.axis("S2")?);
                let states = JointPmf::new(
                    vec![s1.clone(), s2.clone()],
                    self.arrange("joint", &joint.axes, &joint.values, &["S1", "S2"])?,
                )
                .map_err(|e| e.to_string())?;
                let declared: Vec<String> = k.given.iter().chain(&k.out).cloned().collect();
                let values = self.arrange("kernel", &declared, &k.values, &["X", "S1", "S2", "Y"])?;
                let kernel = CondKernel::new(vec![x, s1, s2], vec![y], values).map_err(|e| e.to_string())?;
                Ok(Problem::Channel(ChannelInstance::new(states, kernel).map_err(|e| e.to_string())?))
            }
            Kind::Source => {
                if self.kernel.is_some() {
                    return Err("a source takes no kernel table".into());
                }
                let d = self.distortion.as_ref().ok_or("a source needs a \"distortion\" table")?;
                let (x, xhat, s1, s2) = (self.axis("X")?, self.axis("Xhat")?, self.axis("S1")?, self.axis("S2")?);
                let joint = JointPmf::new(
                    vec![x, s1, s2],
                    self.arrange("joint", &joint.axes, &joint.values, &["X", "S1", "S2"])?,
                )
                .map_err(|e| e.to_string())?;
                let d = self.arrange("distortion", &d.axes, &d.values, &["X", "Xhat"])?;
                Ok(Problem::Source(SourceInstance::new(joint, xhat, d).map_err(|e| e.to_string())?))
            }
        }
    }

    /// Explicit tables for an instance, in canonical axis order.
    pub fn from_problem(p: &Problem) -> Self {
        let names = |pairs: &[(&str, &Alphabet)]| pairs.iter().map(|(n, a)| (n.to_string(), a.size())).collect();
        let axes = |a: &[&str]| a.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match p {
            Problem::Channel(ch) => Self {
                kind: Some(Kind::Channel),
                alphabets: names(&[("X", &ch.x), ("Y", &ch.y), ("S1", &ch.s1), ("S2", &ch.s2)]),
                joint: Some(Table { axes: axes(&["S1", "S2"]), values: ch.state_joint.probs().to_vec() }),
                kernel: Some(KernelTable {
                    given: axes(&["X", "S1", "S2"]),
                    out: axes(&["Y"]),
                    values: ch.kernel.probs().to_vec(),
                }),
                ..Self::default()
            },
            Problem::Source(src) => Self {
                kind: Some(Kind::Source),
                alphabets: names(&[("X", &src.x), ("Xhat", &src.xhat), ("S1", &src.s1), ("S2", &src.s2)]),
                joint: Some(Table { axes: axes(&["X", "S1", "S2"]), values: src.joint.probs().to_vec() }),
                distortion: Some(Table { axes: axes(&["X", "Xhat"]), values: src.distortion.clone() }),
                ..Self::default()
            },
        }
    }

    fn size(&self, name: &str) -> Result<usize, String> {
        match (self.alphabets.get(name), name) {
            (Some(&n), _) => Ok(n),
            (None, "S1" | "S2") => Ok(1),
            (None, _) => Err(format!("alphabets must give the size of {name}")),
        }
    }

    fn arrange(&self, what: &str, axes: &[String], values: &[f64], target: &[&str]) -> Result<Vec<f64>, String> {
        if let Some(unknown) = self.alphabets.keys().find(|k| !["X", "Y", "Xhat", "S1", "S2"].contains(&k.as_str())) {
            return Err(format!("unknown alphabet {unknown:?}"));
        }
        reorder(what, axes, values, target, |a| self.size(a))
    }

    fn axis(&self, name: &str) -> Result<Alphabet, String> {
        Alphabet::new(name, self.size(name)?).map_err(|e| e.to_string())
    }
}

/// Permutes a table declared over `axes` into row-major `target` order.
/// Target axes of size one may be omitted from the declaration.
pub fn reorder(
    what: &str,
    axes: &[String],
    values: &[f64],
    target: &[&str],
    size: impl Fn(&str) -> Result<usize, String>,
) -> Result<Vec<f64>, String> {
    for (i, a) in axes.iter().enumerate() {
        if !target.contains(&a.as_str()) {
            return Err(format!("{what} axis {a:?} is not one of {target:?}"));
        }
        if axes[..i].contains(a) {
            return Err(format!("{what} axis {a:?} declared twice"));
        }
    }
    let mut strides = vec![0; target.len()];
    let mut stride = 1;
    for a in axes.iter().rev() {
        let t = target.iter().position(|t| t == a).expect("checked above");
        strides[t] = stride;
        stride *= size(a)?;
    }
    if values.len() != stride {
        return Err(format!("{what} over {axes:?} needs {stride} values, got {}", values.len()));
    }
    let sizes = target.iter().map(|t| size(t)).collect::<Result<Vec<_>, _>>()?;
    for (t, n) in target.iter().zip(&sizes) {
        if *n != 1 && !axes.iter().any(|a| a == t) {
            return Err(format!("{what} must declare axis {t}"));
        }
    }
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0; target.len()];
    for _ in 0..total {
        out.push(values[idx.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()]);
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}
