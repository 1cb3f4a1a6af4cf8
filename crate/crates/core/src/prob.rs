//! Dense probability tensors over finite alphabets and the information
//! functionals built on them.
//!
//! All logarithms are base 2. Entries below [`ZERO_MASS`] are treated as exact
//! zeros inside logarithms, so `0 log 0 = 0` and `0 log (0/0) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// Entries at or below this value contribute nothing to log terms.
pub const ZERO_MASS: f64 = 1e-15;

/// Inputs whose total deviates from one by more than this are rejected.
pub const NORMALIZE_TOL: f64 = 1e-9;

/// Finite alphabet `{0, .., size-1}` with a short display label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    label: String,
    size: usize,
}

impl Alphabet {
    pub fn new(label: impl Into<String>, size: usize) -> Result<Self> {
        let label = label.into();
        if size == 0 {
            return arg(format!("alphabet {label} must have at least one symbol"));
        }
        Ok(Self { label, size })
    }

    /// Alphabet with a single symbol; used for absent variables.
    pub fn trivial(label: impl Into<String>) -> Self {
        Self { label: label.into(), size: 1 }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

pub(crate) fn shape_of(axes: &[Alphabet]) -> Vec<usize> {
    axes.iter().map(Alphabet::size).collect()
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Visits every multi-index of `shape` in row-major order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..total {
        f(flat, &idx);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn check_entries(probs: &[f64]) -> Result<()> {
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return arg(format!("probability entries must be finite and nonnegative, got {bad}"));
    }
    Ok(())
}

/// Rescales `probs` to sum to one, rejecting totals further than
/// [`NORMALIZE_TOL`] from one.
fn normalize_in_place(probs: &mut [f64], what: &str) -> Result<()> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZE_TOL {
        return arg(format!("{what} sums to {total}, expected 1"));
    }
    // sums within rounding of one are left alone so normalizing twice is a no-op
    if (total - 1.0).abs() > f64::EPSILON * probs.len() as f64 {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(())
}

/// `-p log2 p` with the zero convention.
#[inline]
pub(crate) fn neg_plogp(p: f64) -> f64 {
    if p <= ZERO_MASS {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    neg_plogp(p) + neg_plogp(1.0 - p)
}

/// Joint probability mass function over an ordered list of alphabets,
/// stored densely in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointPmf {
    axes: Vec<Alphabet>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(axes: Vec<Alphabet>, mut probs: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return arg("a joint pmf needs at least one axis");
        }
        let len: usize = axes.iter().map(Alphabet::size).product();
        if probs.len() != len {
            return arg(format!("joint pmf over {len} cells given {} entries", probs.len()));
        }
        check_entries(&probs)?;
        normalize_in_place(&mut probs, "joint pmf")?;
        Ok(Self { axes, probs })
    }

    pub fn from_fn(axes: Vec<Alphabet>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let shape = shape_of(&axes);
        let mut probs = vec![0.0; shape.iter().product()];
        for_each_index(&shape, |flat, idx| probs[flat] = f(idx));
        Self::new(axes, probs)
    }

    pub fn uniform(axes: Vec<Alphabet>) -> Self {
        let len: usize = axes.iter().map(Alphabet::size).product();
        Self { axes, probs: vec![1.0 / len as f64; len] }
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    /// Same cells under new axis labels whose sizes multiply to the same
    /// total (for example merging two axes into one pair axis).
    pub fn reshape(&self, axes: Vec<Alphabet>) -> Result<JointPmf> {
        let len: usize = axes.iter().map(Alphabet::size).product();
        if len != self.probs.len() {
            return arg(format!("cannot reshape {} cells into {len}", self.probs.len()));
        }
        Ok(JointPmf { axes, probs: self.probs.clone() })
    }

    pub fn shape(&self) -> Vec<usize> {
        shape_of(&self.axes)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let strides = strides_of(&self.shape());
        self.probs[idx.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()]
    }

    fn check_axes(&self, set: &[usize], what: &str) -> Result<()> {
        for (k, &a) in set.iter().enumerate() {
            if a >= self.axes.len() {
                return arg(format!("{what}: axis {a} out of range for a {}-axis pmf", self.axes.len()));
            }
            if set[..k].contains(&a) {
                return arg(format!("{what}: axis {a} listed twice"));
            }
        }
        Ok(())
    }

    /// Sums out every axis not in `keep`. The result's axes follow the order
    /// given in `keep`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        if keep.is_empty() {
            return arg("marginalize needs a nonempty axis set");
        }
        self.check_axes(keep, "marginalize")?;
        Ok(self.marginal_unchecked(keep))
    }

    fn marginal_unchecked(&self, keep: &[usize]) -> JointPmf {
        let out_axes: Vec<Alphabet> = keep.iter().map(|&a| self.axes[a].clone()).collect();
        let out_shape = shape_of(&out_axes);
        let out_strides = strides_of(&out_shape);
        let mut out = vec![0.0; out_shape.iter().product()];
        for_each_index(&self.shape(), |flat, idx| {
            let target: usize = keep.iter().zip(&out_strides).map(|(&a, s)| idx[a] * s).sum();
            out[target] += self.probs[flat];
        });
        JointPmf { axes: out_axes, probs: out }
    }

    /// Extends the joint by the output axes of `kernel`, whose given axes are
    /// bound to the axes `bind` of this pmf.
    pub fn chain(&self, kernel: &CondKernel, bind: &[usize]) -> Result<JointPmf> {
        if bind.len() != kernel.given_axes.len() {
            return arg(format!("chain: kernel has {} given axes, bind lists {}", kernel.given_axes.len(), bind.len()));
        }
        for (g, &a) in bind.iter().enumerate() {
            if a >= self.axes.len() {
                return arg(format!("chain: bound axis {a} out of range"));
            }
            if self.axes[a].size() != kernel.given_axes[g].size() {
                return arg(format!(
                    "chain: axis {} has {} symbols but kernel input {} has {}",
                    self.axes[a].label(),
                    self.axes[a].size(),
                    kernel.given_axes[g].label(),
                    kernel.given_axes[g].size()
                ));
            }
        }
        let given_strides = strides_of(&shape_of(&kernel.given_axes));
        let out_len = kernel.out_len();
        let mut probs = Vec::with_capacity(self.probs.len() * out_len);
        for_each_index(&self.shape(), |flat, idx| {
            let g: usize = bind.iter().zip(&given_strides).map(|(&a, s)| idx[a] * s).sum();
            let base = self.probs[flat];
            probs.extend(kernel.slice(g).iter().map(|k| base * k));
        });
        let mut axes = self.axes.clone();
        axes.extend(kernel.out_axes.iter().cloned());
        Ok(JointPmf { axes, probs })
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().map(|&p| neg_plogp(p)).sum()
    }

    fn entropy_of(&self, axes: &[usize]) -> f64 {
        if axes.is_empty() {
            0.0
        } else {
            self.marginal_unchecked(axes).entropy()
        }
    }

    /// `I(A;B|C)` in bits, computed as `H(AC) + H(BC) - H(ABC) - H(C)`.
    /// `a` and `b` must be nonempty; `c` may be empty.
    pub fn mutual_information(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return arg("mutual information needs nonempty A and B");
        }
        let mut all: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
        self.check_axes(&all, "mutual information")?;
        let ac: Vec<usize> = a.iter().chain(c).copied().collect();
        let bc: Vec<usize> = b.iter().chain(c).copied().collect();
        let h_abc = self.entropy_of(&all);
        all.clear();
        let value = self.entropy_of(&ac) + self.entropy_of(&bc) - h_abc - self.entropy_of(c);
        Ok(value.max(0.0))
    }

    /// Tests the Markov chain `A - B - C` through `I(A;C|B) <= tol`.
    pub fn check_markov(&self, a: &[usize], b: &[usize], c: &[usize], tol: f64) -> Result<MarkovCheck> {
        let violation = if a.is_empty() || c.is_empty() { 0.0 } else { self.mutual_information(a, c, b)? };
        Ok(MarkovCheck { holds: violation <= tol, violation })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarkovCheck {
    pub holds: bool,
    /// `I(A;C|B)` in bits.
    pub violation: f64,
}

/// Conditional probability table `p(out | given)`, indexed `(given.., out..)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondKernel {
    given_axes: Vec<Alphabet>,
    out_axes: Vec<Alphabet>,
    probs: Vec<f64>,
}

impl CondKernel {
    pub fn new(given_axes: Vec<Alphabet>, out_axes: Vec<Alphabet>, mut probs: Vec<f64>) -> Result<Self> {
        if out_axes.is_empty() {
            return arg("a kernel needs at least one output axis");
        }
        let given_len: usize = given_axes.iter().map(Alphabet::size).product();
        let out_len: usize = out_axes.iter().map(Alphabet::size).product();
        if probs.len() != given_len * out_len {
            return arg(format!("kernel with {given_len} inputs and {out_len} outputs given {} entries", probs.len()));
        }
        check_entries(&probs)?;
        for (g, slice) in probs.chunks_mut(out_len).enumerate() {
            normalize_in_place(slice, &format!("kernel slice {g}"))?;
        }
        Ok(Self { given_axes, out_axes, probs })
    }

    /// Builds a kernel from `f(given index, out index)`.
    pub fn from_fn(
        given_axes: Vec<Alphabet>,
        out_axes: Vec<Alphabet>,
        mut f: impl FnMut(&[usize], &[usize]) -> f64,
    ) -> Result<Self> {
        let gshape = shape_of(&given_axes);
        let oshape = shape_of(&out_axes);
        let mut probs = Vec::with_capacity(gshape.iter().product::<usize>() * oshape.iter().product::<usize>());
        for_each_index(&gshape, |_, g| for_each_index(&oshape, |_, o| probs.push(f(g, o))));
        Self::new(given_axes, out_axes, probs)
    }

    /// Deterministic kernel placing all mass on `f(given index)` (a flat
    /// output index).
    pub fn deterministic(
        given_axes: Vec<Alphabet>,
        out_axes: Vec<Alphabet>,
        mut f: impl FnMut(&[usize]) -> usize,
    ) -> Result<Self> {
        let out_len: usize = out_axes.iter().map(Alphabet::size).product();
        let gshape = shape_of(&given_axes);
        let mut probs = vec![0.0; gshape.iter().product::<usize>() * out_len];
        let mut bad = None;
        for_each_index(&gshape, |g, idx| {
            let o = f(idx);
            if o < out_len {
                probs[g * out_len + o] = 1.0;
            } else {
                bad = Some(o);
            }
        });
        if let Some(o) = bad {
            return arg(format!("deterministic kernel maps to {o}, outside {out_len} outputs"));
        }
        Ok(Self { given_axes, out_axes, probs })
    }

    pub fn uniform(given_axes: Vec<Alphabet>, out_axes: Vec<Alphabet>) -> Self {
        let given_len: usize = given_axes.iter().map(Alphabet::size).product();
        let out_len: usize = out_axes.iter().map(Alphabet::size).product();
        Self { given_axes, out_axes, probs: vec![1.0 / out_len as f64; given_len * out_len] }
    }

    /// Wraps already-normalized rows without re-validating them.
    pub(crate) fn from_rows_unchecked(given_axes: Vec<Alphabet>, out_axes: Vec<Alphabet>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(
            probs.len(),
            shape_of(&given_axes).iter().product::<usize>() * shape_of(&out_axes).iter().product::<usize>()
        );
        Self { given_axes, out_axes, probs }
    }

    pub fn given_axes(&self) -> &[Alphabet] {
        &self.given_axes
    }

    pub fn out_axes(&self) -> &[Alphabet] {
        &self.out_axes
    }

    pub fn given_len(&self) -> usize {
        self.given_axes.iter().map(Alphabet::size).product()
    }

    pub fn out_len(&self) -> usize {
        self.out_axes.iter().map(Alphabet::size).product()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Output distribution for the flat given index `g`.
    pub fn slice(&self, g: usize) -> &[f64] {
        let n = self.out_len();
        &self.probs[g * n..(g + 1) * n]
    }

    pub fn get(&self, g: usize, o: usize) -> f64 {
        self.probs[g * self.out_len() + o]
    }
}

/// All kernels `p(out | given)` whose entries are multiples of `step`.
#[derive(Clone, Debug)]
pub struct SimplexGrid {
    /// Free coordinates per conditioning slice (`|codomain| - 1`).
    pub free_dims: usize,
    pub step: f64,
    pub points: Vec<CondKernel>,
}

/// Largest grid `simplex_grid` will enumerate.
pub const GRID_CAP: u64 = 2_000_000;

/// Compositions of `n` into `k` nonnegative parts, in ascending
/// lexicographic order.
fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=n {
            prefix.push(first);
            rec(n - first, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Enumerates every kernel from `given` to `codomain` whose entries lie on
/// the lattice `{0, step, .., 1}`. Slices vary lexicographically with the
/// first given symbol most significant.
pub fn simplex_grid(given: &Alphabet, codomain: &Alphabet, step: f64) -> Result<SimplexGrid> {
    if !(step > 0.0 && step <= 1.0) {
        return arg(format!("grid step must lie in (0, 1], got {step}"));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return arg(format!("grid step {step} does not divide 1"));
    }
    let n = n as usize;
    let k = codomain.size();
    let per_slice = binomial((n + k - 1) as u64, (k - 1) as u64);
    let total = (0..given.size()).try_fold(1u64, |acc, _| acc.checked_mul(per_slice));
    match total {
        Some(t) if t <= GRID_CAP => {}
        _ => return Err(Error::Capacity { required: format!("{per_slice}^{}", given.size()), cap: GRID_CAP }),
    }
    let comps = compositions(n, k);
    let rows: Vec<Vec<f64>> = comps.iter().map(|c| c.iter().map(|&m| m as f64 / n as f64).collect()).collect();
    let slices = given.size();
    let mut points = Vec::new();
    let mut choice = vec![0usize; slices];
    loop {
        let probs: Vec<f64> = choice.iter().flat_map(|&c| rows[c].iter().copied()).collect();
        points.push(CondKernel::from_rows_unchecked(vec![given.clone()], vec![codomain.clone()], probs));
        let mut d = slices;
        loop {
            if d == 0 {
                return Ok(SimplexGrid { free_dims: k - 1, step, points });
            }
            d -= 1;
            choice[d] += 1;
            if choice[d] < rows.len() {
                break;
            }
            choice[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab(label: &str, n: usize) -> Alphabet {
        Alphabet::new(label, n).unwrap()
    }

    fn example1_states() -> JointPmf {
        JointPmf::new(vec![ab("S1", 2), ab("S2", 2)], vec![0.1, 0.4, 0.4, 0.1]).unwrap()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Alphabet::new("X", 0).is_err());
        assert!(JointPmf::new(vec![ab("X", 2)], vec![0.5, 0.6]).is_err());
        assert!(JointPmf::new(vec![ab("X", 2)], vec![-0.1, 1.1]).is_err());
        assert!(JointPmf::new(vec![ab("X", 2)], vec![1.0]).is_err());
        assert!(CondKernel::new(vec![ab("X", 2)], vec![ab("Y", 2)], vec![1.0, 0.0, 0.3, 0.3]).is_err());
    }

    #[test]
    fn small_rounding_is_normalized() {
        let p = JointPmf::new(vec![ab("X", 2)], vec![0.5 + 4e-10, 0.5]).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn marginalize_examples() {
        let u = JointPmf::uniform(vec![ab("A", 2), ab("B", 2)]);
        assert_eq!(u.marginalize(&[0]).unwrap().probs(), &[0.5, 0.5]);
        let m = example1_states().marginalize(&[0]).unwrap();
        assert!((m.probs()[0] - 0.5).abs() < 1e-15 && (m.probs()[1] - 0.5).abs() < 1e-15);
        assert!(u.marginalize(&[]).is_err());
        assert!(u.marginalize(&[2]).is_err());
        assert!(u.marginalize(&[0, 0]).is_err());
    }

    #[test]
    fn marginalize_matches_triple_loop() {
        let raw: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 11) as f64 + 0.5).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let p = JointPmf::new(vec![ab("A", 3), ab("B", 2), ab("C", 2)], probs.clone()).unwrap();
        let m = p.marginalize(&[0, 2]).unwrap();
        for a in 0..3 {
            for c in 0..2 {
                let mut s = 0.0;
                for b in 0..2 {
                    s += probs[a * 4 + b * 2 + c];
                }
                assert!((m.get(&[a, c]) - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn chain_examples() {
        let states = example1_states();
        let copy = CondKernel::deterministic(vec![ab("S2", 2)], vec![ab("V2", 2)], |g| g[0]).unwrap();
        let j = states.chain(&copy, &[1]).unwrap();
        for_each_index(&j.shape(), |flat, idx| {
            if idx[1] != idx[2] {
                assert_eq!(j.probs()[flat], 0.0);
            }
        });
        let half = CondKernel::uniform(vec![ab("S2", 2)], vec![ab("V2", 2)]);
        let j = states.chain(&half, &[1]).unwrap();
        for s1 in 0..2 {
            for s2 in 0..2 {
                for v in 0..2 {
                    assert!((j.get(&[s1, s2, v]) - 0.5 * states.get(&[s1, s2])).abs() < 1e-15);
                }
            }
        }
        let three = CondKernel::uniform(vec![ab("Z", 3)], vec![ab("V", 2)]);
        assert!(states.chain(&three, &[0]).is_err());
    }

    #[test]
    fn chain_matches_product_loop() {
        let p = JointPmf::new(vec![ab("A", 2), ab("B", 2)], vec![0.15, 0.25, 0.35, 0.25]).unwrap();
        let k = CondKernel::new(vec![ab("B", 2)], vec![ab("C", 2)], vec![0.9, 0.1, 0.35, 0.65]).unwrap();
        let j = p.chain(&k, &[1]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let want = p.probs()[a * 2 + b] * k.probs()[b * 2 + c];
                    assert!((j.get(&[a, b, c]) - want).abs() < 1e-16);
                }
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let point = JointPmf::new(vec![ab("X", 3)], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(point.entropy(), 0.0);
        let b = |p: f64| JointPmf::new(vec![ab("X", 2)], vec![p, 1.0 - p]).unwrap().entropy();
        assert!((b(0.2) - 0.7219).abs() < 5e-5);
        let closed = -0.3 * 0.3f64.log2() - 0.7 * 0.7f64.log2();
        assert!((b(0.3) - closed).abs() < 1e-15);
        assert!((b(0.3) - 0.8813).abs() < 5e-5);
    }

    #[test]
    fn mutual_information_examples() {
        let indep =
            JointPmf::from_fn(vec![ab("A", 2), ab("B", 3)], |i| [0.3, 0.7][i[0]] * [0.2, 0.5, 0.3][i[1]]).unwrap();
        assert!(indep.mutual_information(&[0], &[1], &[]).unwrap() < 1e-12);
        let copy = JointPmf::new(vec![ab("A", 2), ab("B", 2)], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((copy.mutual_information(&[0], &[1], &[]).unwrap() - 1.0).abs() < 1e-12);
        let i = example1_states().mutual_information(&[0], &[1], &[]).unwrap();
        assert!((i - (1.0 - binary_entropy(0.2))).abs() < 1e-12);
        assert!((i - 0.2781).abs() < 5e-5);
        assert!(copy.mutual_information(&[0], &[0], &[]).is_err());
        assert!(copy.mutual_information(&[0], &[1], &[1]).is_err());
    }

    #[test]
    fn markov_examples() {
        let states = example1_states();
        let w = CondKernel::new(vec![ab("S2", 2)], vec![ab("V2", 2)], vec![0.8, 0.2, 0.3, 0.7]).unwrap();
        let j = states.chain(&w, &[1]).unwrap();
        let m = j.check_markov(&[2], &[1], &[0], 1e-12).unwrap();
        assert!(m.holds && m.violation < 1e-12);

        let xor =
            CondKernel::deterministic(vec![ab("S1", 2), ab("S2", 2)], vec![ab("V2", 2)], |g| g[0] ^ g[1]).unwrap();
        let j = states.chain(&xor, &[0, 1]).unwrap();
        let m = j.check_markov(&[2], &[1], &[0], 1e-9).unwrap();
        let direct = j.mutual_information(&[2], &[0], &[1]).unwrap();
        assert!(!m.holds && m.violation > 0.1);
        assert!((m.violation - direct).abs() < 1e-15);

        let point = JointPmf::from_fn(vec![ab("A", 2), ab("C", 2), ab("B", 2)], |i| {
            if i[1] == 0 {
                [0.4, 0.6][i[0]] * [0.5, 0.5][i[2]]
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(point.check_markov(&[0], &[2], &[1], 1e-12).unwrap().holds);
    }

    #[test]
    fn grid_examples() {
        let one = Alphabet::trivial("G");
        let g = simplex_grid(&one, &ab("V", 2), 0.5).unwrap();
        let rows: Vec<&[f64]> = g.points.iter().map(|k| k.probs()).collect();
        assert_eq!(rows, vec![&[0.0, 1.0][..], &[0.5, 0.5][..], &[1.0, 0.0][..]]);
        assert_eq!(simplex_grid(&ab("S", 2), &ab("V", 2), 0.5).unwrap().points.len(), 9);
        let degenerate = simplex_grid(&ab("S", 2), &ab("V", 3), 1.0).unwrap();
        assert_eq!(degenerate.points.len(), 9);
        assert!(degenerate.points.iter().all(|k| k.probs().iter().all(|&p| p == 0.0 || p == 1.0)));
        assert!(simplex_grid(&one, &ab("V", 2), 0.3).is_err());
        assert!(simplex_grid(&one, &ab("V", 2), 0.0).is_err());
    }

    #[test]
    fn grid_count_and_degenerate_inclusion() {
        let g = simplex_grid(&ab("S", 2), &ab("V", 3), 0.25).unwrap();
        assert_eq!(g.points.len(), 15 * 15);
        let g = simplex_grid(&ab("S", 2), &ab("V", 2), 0.05).unwrap();
        assert_eq!(g.points.len(), 441);
        for a in 0..2 {
            for b in 0..2 {
                let want = [[1.0, 0.0], [0.0, 1.0]];
                assert!(g.points.iter().any(|k| k.slice(0) == want[a] && k.slice(1) == want[b]));
            }
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn pmf_strategy(shape: Vec<usize>) -> impl Strategy<Value = JointPmf> {
        let len: usize = shape.iter().product();
        prop::collection::vec(0.0f64..1.0, len).prop_filter_map("all zero", move |raw| {
            let total: f64 = raw.iter().sum();
            if total < 1e-3 {
                return None;
            }
            let axes = shape.iter().enumerate().map(|(i, &n)| Alphabet::new(format!("A{i}"), n).unwrap()).collect();
            JointPmf::new(axes, raw.iter().map(|r| r / total).collect()).ok()
        })
    }

    proptest! {
        #[test]
        fn information_is_nonnegative_and_symmetric(p in pmf_strategy(vec![2, 3, 2])) {
            prop_assert!(p.entropy() >= 0.0);
            let ab = p.mutual_information(&[0], &[1], &[2]).unwrap();
            let ba = p.mutual_information(&[1], &[0], &[2]).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-10);
            let sum: f64 = p.marginalize(&[2, 0]).unwrap().probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }

        #[test]
        fn chain_then_marginalize_round_trips(
            p in pmf_strategy(vec![2, 2]),
            rows in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let probs: Vec<f64> = rows
                .chunks(3)
                .flat_map(|r| { let t: f64 = r.iter().sum(); r.iter().map(move |v| v / t) })
                .collect();
            let k = CondKernel::new(
                vec![Alphabet::new("B", 2).unwrap()],
                vec![Alphabet::new("C", 3).unwrap()],
                probs,
            ).unwrap();
            let j = p.chain(&k, &[1]).unwrap();
            let sum: f64 = j.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            let back = j.marginalize(&[0, 1]).unwrap();
            for (x, y) in back.probs().iter().zip(p.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!(j.check_markov(&[2], &[1], &[0], 1e-10).unwrap().violation < 1e-10);
        }
    }
}
