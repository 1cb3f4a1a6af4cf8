//! Geometric-programming dual of the Wyner-Ziv problem and a small
//! log-barrier Newton solver for linear objectives under affine and
//! log-sum-exp constraints.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ba::{wz_primal, SolveOptions, SolveReport, TracePoint};
use crate::case2::{CurvePoint, PointStatus};
use crate::error::{arg, Error, Result};
use crate::instance::{SourceInstance, WzSource};
use crate::par;
use crate::prob::{simplex_grid, Alphabet, CondKernel, JointPmf, SimplexGrid};
use crate::strategy::{enumerate_strategies, StrategySpace};

/// `a . z + b <= 0`, with `a` stored sparsely.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffineConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub offset: f64,
}

/// Convex-form geometric program: maximize `c . z` subject to affine
/// constraints, `log sum_{i in G} exp(z_i) <= 0` for every group `G`, and
/// `z_i >= 0` on `nonneg`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub affine: Vec<AffineConstraint>,
    pub lse: Vec<Vec<usize>>,
    pub nonneg: Vec<usize>,
}

impl GpProblem {
    pub fn num_constraints(&self) -> usize {
        self.affine.len() + self.lse.len() + self.nonneg.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars;
        if n == 0 || self.objective.len() != n {
            return arg("objective length must equal the (nonzero) variable count");
        }
        let in_range = |i: &usize| *i < n;
        if !self.affine.iter().all(|a| a.coeffs.iter().map(|(i, _)| i).all(in_range))
            || !self.lse.iter().flatten().all(in_range)
            || !self.nonneg.iter().all(in_range)
        {
            return arg("constraint index out of range");
        }
        if self.lse.iter().any(Vec::is_empty) {
            return arg("log-sum-exp groups must be nonempty");
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.affine.iter().all(|a| a.offset.is_finite() && a.coeffs.iter().all(|(_, v)| v.is_finite()));
        if !finite {
            return arg("program coefficients must be finite");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GpOptions {
    /// Stop once `m / t` falls below this (bits).
    pub tol: f64,
    pub t0: f64,
    pub mu: f64,
    /// Centering stops when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Minimum slack of the start point for the program to count as strictly
    /// feasible.
    pub slater_slack: f64,
    /// Agreement required between GP and primal when cross-checking, bits.
    pub tight_tol: f64,
    pub cross_check: bool,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            t0: 1.0,
            mu: 20.0,
            newton_tol: 1e-10,
            max_newton: 200,
            slater_slack: 1e-8,
            tight_tol: 1e-3,
            cross_check: false,
        }
    }
}

impl GpOptions {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.t0 > 0.0 && self.mu > 1.0 && self.newton_tol > 0.0) || self.max_newton == 0 {
            return arg("barrier options need tol, t0, newton_tol > 0, mu > 1 and a Newton step cap");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GpReport {
    /// Optimal value, bits.
    pub value: f64,
    pub z_opt: Vec<f64>,
    pub barrier_iters: usize,
    pub newton_steps: usize,
    /// Strictly feasible start verified and final duality measure below
    /// tolerance with every stage centered.
    pub certified: bool,
    pub slater: bool,
    /// Final `m / t`, bits.
    pub duality_measure: f64,
    /// Per Newton iterate: objective and objective plus `m / t`, bits.
    pub trace: Vec<TracePoint>,
    pub stages: Vec<StageRecord>,
    /// Affine multipliers `1 / (t * slack)` at the returned point.
    pub affine_multipliers: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    /// Objective at the end of the stage, bits.
    pub value: f64,
    pub newton_steps: usize,
    pub centered: bool,
}

/// Internal constraint form. `Lse` means `lse(z_G) - z_minus <= 0`.
enum Con {
    Affine { coeffs: Vec<(usize, f64)>, offset: f64 },
    Lse { group: Vec<usize>, minus: Option<usize> },
}

fn lse_of(z: &[f64], group: &[usize]) -> (f64, f64) {
    let m = group.iter().map(|&i| z[i]).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = group.iter().map(|&i| (z[i] - m).exp()).sum();
    (m + s.ln(), m)
}

impl Con {
    fn value(&self, z: &[f64]) -> f64 {
        match self {
            Con::Affine { coeffs, offset } => coeffs.iter().map(|&(i, a)| a * z[i]).sum::<f64>() + offset,
            Con::Lse { group, minus } => lse_of(z, group).0 - minus.map_or(0.0, |k| z[k]),
        }
    }
}

struct Engine {
    n: usize,
    c: Vec<f64>,
    cons: Vec<Con>,
}

struct Centered {
    steps: usize,
    ok: bool,
}

impl Engine {
    fn slacks(&self, z: &[f64]) -> Option<Vec<f64>> {
        let s: Vec<f64> = self.cons.iter().map(|c| -c.value(z)).collect();
        s.iter().all(|v| *v > 0.0 && v.is_finite()).then_some(s)
    }

    fn cz(&self, z: &[f64]) -> f64 {
        self.c.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    fn grad_hess(&self, z: &[f64], slack: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = DVector::from_iterator(n, self.c.iter().map(|c| -t * c));
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (con, &s) in self.cons.iter().zip(slack) {
            match con {
                Con::Affine { coeffs, .. } => {
                    for &(i, a) in coeffs {
                        g[i] += a / s;
                        for &(j, b) in coeffs {
                            h[(i, j)] += a * b / (s * s);
                        }
                    }
                }
                Con::Lse { group, minus } => {
                    let (l, _) = lse_of(z, group);
                    let pi: Vec<f64> = group.iter().map(|&i| (z[i] - l).exp()).collect();
                    let mut grad: Vec<(usize, f64)> = group.iter().copied().zip(pi.iter().copied()).collect();
                    if let Some(k) = minus {
                        grad.push((*k, -1.0));
                    }
                    for &(i, a) in &grad {
                        g[i] += a / s;
                        for &(j, b) in &grad {
                            h[(i, j)] += a * b / (s * s);
                        }
                    }
                    for (a, &i) in group.iter().enumerate() {
                        h[(i, i)] += pi[a] / s;
                        for (b, &j) in group.iter().enumerate() {
                            h[(i, j)] -= pi[a] * pi[b] / s;
                        }
                    }
                }
            }
        }
        (g, h)
    }

    /// Change of the barrier function `-t c.z - sum ln s` from `z` to `zn`,
    /// accumulated as log ratios to keep precision at large `t`.
    fn delta(&self, z: &[f64], zn: &[f64], s: &[f64], sn: &[f64], t: f64) -> f64 {
        let dc: f64 = self.c.iter().zip(z.iter().zip(zn)).map(|(c, (a, b))| c * (b - a)).sum();
        -t * dc - s.iter().zip(sn).map(|(a, b)| (b / a).ln()).sum::<f64>()
    }

    /// Newton direction. Level 0 solves the Jacobi-scaled system with a
    /// negligible relative ridge; higher levels add an absolute ridge tied to
    /// the largest curvature, bounding steps along nearly flat directions.
    fn newton_dir(g: &DVector<f64>, h: &DMatrix<f64>, level: u32) -> Option<DVector<f64>> {
        let n = g.len();
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1e-300, f64::max);
        let d: Vec<f64> = (0..n).map(|i| 1.0 / h[(i, i)].max(1e-300).sqrt()).collect();
        let (mut rel, abs) =
            if level == 0 { (1e-14, 0.0) } else { (0.0, scale * 1e-13 * 1e3f64.powi(level as i32 - 1)) };
        for _ in 0..8 {
            let m = DMatrix::from_fn(n, n, |i, j| {
                let ridge = if i == j { rel + abs * d[i] * d[i] } else { 0.0 };
                h[(i, j)] * d[i] * d[j] + ridge
            });
            if let Some(ch) = m.cholesky() {
                let rhs = DVector::from_fn(n, |i, _| -g[i] * d[i]);
                let u = ch.solve(&rhs);
                let dir = DVector::from_fn(n, |i, _| u[i] * d[i]);
                if dir.iter().all(|v| v.is_finite()) {
                    return Some(dir);
                }
            }
            rel = if rel == 0.0 { 1e-12 } else { rel * 100.0 };
        }
        None
    }

    /// Backtracking line search; returns the new point, its slacks and the step.
    fn line_search(
        &self,
        z: &[f64],
        slack: &[f64],
        dir: &DVector<f64>,
        slope: f64,
        t: f64,
    ) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let mut step = 1.0;
        while step >= 1e-30 {
            let zn: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            if let Some(sn) = self.slacks(&zn) {
                if self.delta(z, &zn, slack, &sn, t) <= 0.01 * step * slope {
                    return Some((zn, sn, step));
                }
            }
            step *= 0.5;
        }
        None
    }

    /// Minimizes the barrier function at `t` from a strictly feasible `z`.
    /// `on_step` sees each accepted iterate and may request an early stop.
    fn center(
        &self,
        z: &mut Vec<f64>,
        t: f64,
        opts: &GpOptions,
        mut on_step: impl FnMut(&[f64]) -> bool,
    ) -> Result<Centered> {
        let mut slack = self.slacks(z).ok_or_else(|| Error::Numerical("iterate left the feasible set".into()))?;
        let mut steps = 0;
        while steps < opts.max_newton {
            let (g, h) = self.grad_hess(z, &slack, t);
            let dir = Self::newton_dir(&g, &h, 0).ok_or_else(|| Error::Numerical("singular Newton system".into()))?;
            let slope = g.dot(&dir);
            if -slope / 2.0 <= opts.newton_tol {
                return Ok(Centered { steps, ok: true });
            }
            let mut accepted = self.line_search(z, &slack, &dir, slope, t);
            // near the center a full step is always accepted; anything less at
            // this decrement is rounding
            if -slope / 2.0 <= PRECISION_FLOOR && !matches!(accepted, Some((_, _, step)) if step == 1.0) {
                return Ok(Centered { steps, ok: true });
            }
            for level in 1..=4 {
                if accepted.is_some() {
                    break;
                }
                if let Some(d) = Self::newton_dir(&g, &h, level) {
                    accepted = self.line_search(z, &slack, &d, g.dot(&d), t);
                }
            }
            let Some((zn, sn, _)) = accepted else {
                // No representable descent left at this precision.
                return Ok(Centered { steps, ok: false });
            };
            *z = zn;
            slack = sn;
            steps += 1;
            if !self.cz(z).is_finite() || self.cz(z).abs() > 1e15 {
                return Err(Error::Numerical("barrier iterates diverged".into()));
            }
            if on_step(z) {
                return Ok(Centered { steps, ok: true });
            }
        }
        Ok(Centered { steps, ok: false })
    }
}

fn engine_of(p: &GpProblem) -> Engine {
    let mut cons: Vec<Con> =
        p.affine.iter().map(|a| Con::Affine { coeffs: a.coeffs.clone(), offset: a.offset }).collect();
    cons.extend(p.lse.iter().map(|g| Con::Lse { group: g.clone(), minus: None }));
    cons.extend(p.nonneg.iter().map(|&i| Con::Affine { coeffs: vec![(i, -1.0)], offset: 0.0 }));
    Engine { n: p.num_vars, c: p.objective.clone(), cons }
}

/// Newton decrement below which a damped or failed step is put down to rounding.
pub const PRECISION_FLOOR: f64 = 1e-6;

/// Half-width of the box bounding phase-one iterates.
pub const PHASE_ONE_BOX: f64 = 1e4;

/// Finds a strictly feasible point by minimizing a shared slack `s` over
/// `g_i(z) <= s`, with `s >= -1`.
fn phase_one(p: &GpProblem, opts: &GpOptions) -> Result<Vec<f64>> {
    let n = p.num_vars;
    let k = n;
    let mut cons: Vec<Con> = p
        .affine
        .iter()
        .map(|a| {
            let mut coeffs = a.coeffs.clone();
            coeffs.push((k, -1.0));
            Con::Affine { coeffs, offset: a.offset }
        })
        .collect();
    cons.extend(p.lse.iter().map(|g| Con::Lse { group: g.clone(), minus: Some(k) }));
    cons.extend(p.nonneg.iter().map(|&i| Con::Affine { coeffs: vec![(i, -1.0), (k, -1.0)], offset: 0.0 }));
    let base = cons.len();
    cons.push(Con::Affine { coeffs: vec![(k, -1.0)], offset: -1.0 });
    // A box keeps the centering problem bounded along free directions.
    for i in 0..n {
        cons.push(Con::Affine { coeffs: vec![(i, 1.0)], offset: -PHASE_ONE_BOX });
        cons.push(Con::Affine { coeffs: vec![(i, -1.0)], offset: -PHASE_ONE_BOX });
    }
    let mut c = vec![0.0; n + 1];
    c[k] = -1.0;
    let engine = Engine { n: n + 1, c, cons };
    let mut z = vec![0.0; n + 1];
    let worst = engine.cons[..base].iter().map(|c| c.value(&z)).fold(f64::NEG_INFINITY, f64::max);
    z[k] = worst.max(0.0) + 1.0;
    let m = engine.cons.len() as f64;
    let target = -10.0 * opts.slater_slack;
    let mut t = opts.t0;
    loop {
        let mut done = false;
        engine.center(&mut z, t, opts, |z| {
            done = z[k] < target;
            done
        })?;
        if done || z[k] < target {
            z.truncate(n);
            return Ok(z);
        }
        if m / t < opts.tol {
            return Err(Error::Infeasible("no strictly feasible point exists".into()));
        }
        t *= opts.mu;
    }
}

/// Maximizes `c . z` by the log-barrier method with Newton centering and
/// backtracking line search. Without `start` a phase-one solve supplies a
/// strictly feasible point.
pub fn solve_gp(p: &GpProblem, start: Option<&[f64]>, opts: &GpOptions) -> Result<GpReport> {
    p.check()?;
    opts.check()?;
    let engine = engine_of(p);
    let mut z = match start {
        Some(s) if s.len() == p.num_vars => s.to_vec(),
        Some(_) => return arg("start point has the wrong length"),
        None => phase_one(p, opts)?,
    };
    let slack = engine.slacks(&z).ok_or_else(|| Error::Infeasible("start point is not strictly feasible".into()))?;
    let slater = slack.iter().all(|s| *s >= opts.slater_slack);
    let m = engine.cons.len() as f64;
    let mut t = opts.t0;
    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut newton_steps = 0;
    let mut all_centered = true;
    let mut barrier_iters = 0;
    loop {
        let gap = m / t;
        let c = engine.center(&mut z, t, opts, |z| {
            let v = engine.cz(z);
            trace.push(TracePoint { objective: v / LN_2, bound: (v + gap) / LN_2 });
            false
        })?;
        newton_steps += c.steps;
        all_centered &= c.ok;
        barrier_iters += 1;
        stages.push(StageRecord { value: engine.cz(&z) / LN_2, newton_steps: c.steps, centered: c.ok });
        if gap / LN_2 < opts.tol {
            break;
        }
        t *= opts.mu;
    }
    let slack = engine.slacks(&z).expect("iterates stay strictly feasible");
    let affine_multipliers = slack[..p.affine.len()].iter().map(|s| 1.0 / (t * s)).collect();
    Ok(GpReport {
        value: engine.cz(&z) / LN_2,
        z_opt: z,
        barrier_iters,
        newton_steps,
        certified: slater && all_centered,
        slater,
        duality_measure: m / t / LN_2,
        trace,
        stages,
        affine_multipliers,
    })
}

/// Source `p(a, s, v)` whose encoder sees `(A, V)` and whose decoder sees
/// `(S, V)`; `v` is shared. Plain Wyner-Ziv has a single `v`.
struct CondSource {
    na: usize,
    ns: usize,
    nv: usize,
    nxh: usize,
    /// `p[(a * ns + s) * nv + v]`.
    p: Vec<f64>,
    /// `d[a * nxh + xh]`.
    d: Vec<f64>,
}

/// Variable and constraint layout of a built program.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GpLayout {
    pub na: usize,
    pub ns: usize,
    pub nv: usize,
    pub nt: usize,
    /// Variable of `alpha_{a,v}`, `None` where `p(a,v) = 0`.
    pub alpha: Vec<Option<usize>>,
    pub gamma: usize,
    /// Variable of `y_{a,s,v,t}` at `((a * ns + s) * nv + v) * nt + t`.
    pub y: Vec<Option<usize>>,
    /// `(a, v, t)` of each affine constraint, in order.
    pub affine_keys: Vec<(usize, usize, usize)>,
    /// `(s, v, t)` of each log-sum-exp group, in order.
    pub lse_keys: Vec<(usize, usize, usize)>,
    /// Set when `D` sits at the distortion floor and `gamma` is bounded above.
    pub gamma_cap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GpBuild {
    pub problem: GpProblem,
    /// Strictly feasible start.
    pub start: Vec<f64>,
    pub layout: GpLayout,
    pub strategies: StrategySpace,
    /// Lowest achievable distortion, `sum p(a) min d(a, .)`.
    pub distortion_floor: f64,
    /// `p(a, v)`.
    pub p_av: Vec<f64>,
    /// `e(a, v, t) = sum_s p(s|a,v) d(a, t(s))` at `(a * nv + v) * nt + t`.
    pub expected: Vec<f64>,
}

impl GpBuild {
    /// Primal strategy law `q(t | a, v)` from the affine multipliers.
    /// Rows of zero-mass `(a, v)` are uniform.
    pub fn recover_q(&self, report: &GpReport) -> Vec<f64> {
        let l = &self.layout;
        let mut q = vec![1.0 / l.nt as f64; l.na * l.nv * l.nt];
        let mut sums = vec![0.0; l.na * l.nv];
        for (&(a, v, t), &nu) in l.affine_keys.iter().zip(&report.affine_multipliers) {
            q[(a * l.nv + v) * l.nt + t] = nu;
            sums[a * l.nv + v] += nu;
        }
        for (i, s) in sums.iter().enumerate() {
            if *s > 0.0 {
                q[i * l.nt..(i + 1) * l.nt].iter_mut().for_each(|x| *x /= s);
            }
        }
        q
    }

    /// Distortion multiplier at the solution, bits per unit distortion.
    pub fn multiplier(&self, report: &GpReport) -> f64 {
        report.z_opt[self.layout.gamma] / std::f64::consts::LN_2
    }

    pub fn distortion_of(&self, q: &[f64]) -> f64 {
        let l = &self.layout;
        (0..l.na * l.nv)
            .map(|i| self.p_av[i] * (0..l.nt).map(|t| q[i * l.nt + t] * self.expected[i * l.nt + t]).sum::<f64>())
            .sum()
    }
}

/// Cap on `gamma` when the program sits at the distortion floor, where the
/// dual optimum escapes to infinity.
fn gamma_cap(d: &[f64]) -> f64 {
    let min_pos = d.iter().copied().filter(|v| *v > 1e-12).fold(f64::INFINITY, f64::min);
    if min_pos.is_finite() {
        50.0 / min_pos
    } else {
        50.0
    }
}

fn build(src: &CondSource, strategies: StrategySpace, dist: f64) -> Result<GpBuild> {
    if !(dist >= 0.0) || !dist.is_finite() {
        return arg("distortion bound must be finite and nonnegative");
    }
    let CondSource { na, ns, nv, nxh, .. } = *src;
    let nt = strategies.len();
    let p = |a: usize, s: usize, v: usize| src.p[(a * ns + s) * nv + v];
    let mut p_av = vec![0.0; na * nv];
    let mut p_sv = vec![0.0; ns * nv];
    for a in 0..na {
        for s in 0..ns {
            for v in 0..nv {
                p_av[a * nv + v] += p(a, s, v);
                p_sv[s * nv + v] += p(a, s, v);
            }
        }
    }
    let mut expected = vec![0.0; na * nv * nt];
    let mut floor = 0.0;
    for a in 0..na {
        for v in 0..nv {
            let m = p_av[a * nv + v];
            if m <= 0.0 {
                continue;
            }
            for t in 0..nt {
                expected[(a * nv + v) * nt + t] =
                    (0..ns).map(|s| p(a, s, v) / m * src.d[a * nxh + strategies.apply(t, s)]).sum();
            }
            floor +=
                m * expected[(a * nv + v) * nt..(a * nv + v + 1) * nt].iter().copied().fold(f64::INFINITY, f64::min);
        }
    }
    if dist < floor - 1e-12 {
        return Err(Error::Infeasible(format!("distortion {dist} lies below the achievable floor {floor}")));
    }

    let mut num_vars = 0;
    let mut alpha = vec![None; na * nv];
    for (i, slot) in alpha.iter_mut().enumerate() {
        if p_av[i] > 0.0 {
            *slot = Some(num_vars);
            num_vars += 1;
        }
    }
    let gamma = num_vars;
    num_vars += 1;
    let mut y = vec![None; na * ns * nv * nt];
    for a in 0..na {
        for s in 0..ns {
            for v in 0..nv {
                if p(a, s, v) > 0.0 {
                    for t in 0..nt {
                        y[((a * ns + s) * nv + v) * nt + t] = Some(num_vars);
                        num_vars += 1;
                    }
                }
            }
        }
    }

    let mut objective = vec![0.0; num_vars];
    for (i, slot) in alpha.iter().enumerate() {
        if let Some(k) = slot {
            objective[*k] = p_av[i];
        }
    }
    objective[gamma] = -dist;

    let mut affine = Vec::new();
    let mut affine_keys = Vec::new();
    for a in 0..na {
        for v in 0..nv {
            let Some(ka) = alpha[a * nv + v] else { continue };
            for t in 0..nt {
                let mut coeffs = vec![(ka, 1.0), (gamma, -expected[(a * nv + v) * nt + t])];
                let mut offset = 0.0;
                for s in 0..ns {
                    let j = p(a, s, v);
                    if j <= 0.0 {
                        continue;
                    }
                    let w = j / p_av[a * nv + v];
                    offset += w * (j / p_sv[s * nv + v]).ln();
                    coeffs.push((y[((a * ns + s) * nv + v) * nt + t].expect("kept"), -w));
                }
                affine.push(AffineConstraint { coeffs, offset });
                affine_keys.push((a, v, t));
            }
        }
    }

    let mut lse = Vec::new();
    let mut lse_keys = Vec::new();
    let mut group_size = vec![0usize; ns * nv];
    for s in 0..ns {
        for v in 0..nv {
            if p_sv[s * nv + v] <= 0.0 {
                continue;
            }
            for t in 0..nt {
                let group: Vec<usize> = (0..na).filter_map(|a| y[((a * ns + s) * nv + v) * nt + t]).collect();
                group_size[s * nv + v] = group.len();
                lse.push(group);
                lse_keys.push((s, v, t));
            }
        }
    }

    let cap = (dist <= floor + 1e-12).then(|| gamma_cap(&src.d));
    if let Some(c) = cap {
        affine.push(AffineConstraint { coeffs: vec![(gamma, 1.0)], offset: -c });
    }

    let mut start = vec![0.0; num_vars];
    let g0 = cap.map_or(0.1, |c| (0.1f64).min(c / 2.0));
    start[gamma] = g0;
    for a in 0..na {
        for s in 0..ns {
            for v in 0..nv {
                for t in 0..nt {
                    if let Some(k) = y[((a * ns + s) * nv + v) * nt + t] {
                        start[k] = -(group_size[s * nv + v] as f64).ln() - 0.1;
                    }
                }
            }
        }
    }
    let mut residual: HashMap<usize, f64> = HashMap::new();
    for c in &affine {
        let (ka, _) = c.coeffs[0];
        if ka == gamma {
            continue;
        }
        let rest: f64 = c.coeffs[1..].iter().map(|&(i, w)| w * start[i]).sum::<f64>() + c.offset;
        let e = residual.entry(ka).or_insert(f64::INFINITY);
        *e = e.min(-rest);
    }
    for (k, r) in residual {
        start[k] = r - 0.1;
    }

    Ok(GpBuild {
        problem: GpProblem { num_vars, objective, affine, lse, nonneg: vec![gamma] },
        start,
        layout: GpLayout { na, ns, nv, nt, alpha, gamma, y, affine_keys, lse_keys, gamma_cap: cap },
        strategies,
        distortion_floor: floor,
        p_av,
        expected,
    })
}

/// Dual program of the Wyner-Ziv rate at distortion `D`, over strategies
/// `S -> X̂`. Variables are ordered `(alpha_x | gamma | y_{x,s,t})`.
pub fn build_wz_gp(src: &WzSource, dist: f64) -> Result<GpBuild> {
    let strategies = enumerate_strategies(std::slice::from_ref(&src.s), &src.xhat)?;
    let cond = CondSource {
        na: src.x.size(),
        ns: src.s.size(),
        nv: 1,
        nxh: src.xhat.size(),
        p: src.joint.probs().to_vec(),
        d: src.distortion.clone(),
    };
    build(&cond, strategies, dist)
}

/// Dual program of the rate for a fixed description `w(v1|s1)`. The pair
/// `(X, S1)` is indexed `x * |S1| + s1`; strategies map `S2 -> X̂` for each
/// `v1`, so variables are `(alpha_{x,s1,v1} | gamma | y_{x,s1,s2,v1,t})`.
pub fn build_case1_rd_gp(src: &SourceInstance, w: &CondKernel, dist: f64) -> Result<GpBuild> {
    match w.given_axes() {
        [g] if g.size() == src.s1.size() => {}
        _ => return arg("w must be conditioned on S1 alone"),
    }
    let (nx, ns1, ns2, nv) = (src.x.size(), src.s1.size(), src.s2.size(), w.out_len());
    let mut p = vec![0.0; nx * ns1 * ns2 * nv];
    for x in 0..nx {
        for s1 in 0..ns1 {
            for s2 in 0..ns2 {
                for v in 0..nv {
                    p[(((x * ns1 + s1) * ns2) + s2) * nv + v] = src.joint.get(&[x, s1, s2]) * w.get(s1, v);
                }
            }
        }
    }
    let mut d = Vec::with_capacity(nx * ns1 * src.xhat.size());
    for x in 0..nx {
        for _ in 0..ns1 {
            d.extend((0..src.xhat.size()).map(|xh| src.d(x, xh)));
        }
    }
    let strategies = enumerate_strategies(std::slice::from_ref(&src.s2), &src.xhat)?;
    let cond = CondSource { na: nx * ns1, ns: ns2, nv, nxh: src.xhat.size(), p, d };
    build(&cond, strategies, dist)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WzGpReport {
    /// GP optimum, bits.
    pub value: f64,
    pub gp: GpReport,
    /// Recovered `q(t|x)`.
    pub q: CondKernel,
    /// Distortion of the recovered `q`.
    pub distortion: f64,
    /// Distortion multiplier, bits per unit distortion. The optimum equals
    /// `I + multiplier * (distortion - D)` at the recovered `q`.
    pub multiplier: f64,
    pub primal: Option<SolveReport>,
    /// `|GP - primal| <= tight_tol`, when cross-checked.
    pub tight: Option<bool>,
}

/// Wyner-Ziv rate as the optimum of its dual program.
pub fn wz_rate_via_gp(src: &WzSource, dist: f64, opts: &GpOptions) -> Result<WzGpReport> {
    let b = build_wz_gp(src, dist)?;
    let gp = solve_gp(&b.problem, Some(&b.start), opts)?;
    let q = b.recover_q(&gp);
    let distortion = b.distortion_of(&q);
    let multiplier = b.multiplier(&gp);
    let q = CondKernel::from_rows_unchecked(vec![src.x.clone()], vec![b.strategies.alphabet("T")], q);
    let (primal, tight) = if opts.cross_check {
        let r = wz_primal(src, dist, &SolveOptions::default())?;
        let tight = (r.value - gp.value).abs() <= opts.tight_tol;
        (Some(r), Some(tight))
    } else {
        (None, None)
    };
    Ok(WzGpReport { value: gp.value, gp, q, distortion, multiplier, primal, tight })
}

/// Joint over `(X, S1, S2, V, U, X̂)` realized by `w(v|s1)` and a strategy
/// law `q(u | (x, s1), v)` over strategies `S2 -> X̂`, with `X̂ = u(s2)`.
pub fn case1_joint(src: &SourceInstance, w: &CondKernel, q: &CondKernel) -> Result<JointPmf> {
    let v = w.out_axes()[0].clone();
    let sp = enumerate_strategies(std::slice::from_ref(&src.s2), &src.xhat)?;
    let ns1 = src.s1.size();
    if q.given_len() != src.x.size() * ns1 * v.size() || q.out_len() != sp.len() {
        return arg("strategy law must be conditioned on (X, S1, V) over all strategies S2 -> X̂");
    }
    let nv = v.size();
    JointPmf::from_fn(vec![src.x.clone(), src.s1.clone(), src.s2.clone(), v, sp.alphabet("U"), src.xhat.clone()], |i| {
        let (x, s1, s2, vv, u, xh) = (i[0], i[1], i[2], i[3], i[4], i[5]);
        if sp.apply(u, s2) != xh {
            return 0.0;
        }
        src.joint.get(&[x, s1, s2]) * w.get(s1, vv) * q.get((x * ns1 + s1) * nv + vv, u)
    })
}

/// Views a side-information source as a two-sided one with trivial `S1`.
pub fn as_two_sided(src: &WzSource) -> SourceInstance {
    let joint = src.joint.reshape(vec![src.x.clone(), Alphabet::trivial("S1"), src.s.clone()]).expect("same cells");
    SourceInstance::new(joint, src.xhat.clone(), src.distortion.clone()).expect("validated source")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Case1Options {
    pub grid_step: f64,
    pub v1_size: usize,
    /// Band width below `R'`, bits; `None` picks
    /// `max(0.02, largest spacing between sorted grid rates)`.
    pub epsilon: Option<f64>,
    pub gp: GpOptions,
}

impl Default for Case1Options {
    fn default() -> Self {
        Self { grid_step: 0.05, v1_size: 2, epsilon: None, gp: GpOptions::default() }
    }
}

/// Values within this distance of the best count as ties.
pub const TIE_TOL: f64 = 1e-9;

struct Case1Grid<'a> {
    src: &'a SourceInstance,
    dist: f64,
    opts: Case1Options,
    step: f64,
    grid: SimplexGrid,
    rates: Vec<f64>,
    epsilon: f64,
    cache: HashMap<usize, (f64, GpReport, Vec<f64>, f64)>,
}

impl<'a> Case1Grid<'a> {
    fn new(src: &'a SourceInstance, dist: f64, opts: Case1Options, step: f64) -> Result<Self> {
        let v1 = Alphabet::new("V1", opts.v1_size)?;
        let grid = simplex_grid(&src.s1, &v1, step)?;
        let rates =
            par::map(&grid.points, |w| src.joint.chain(w, &[1]).and_then(|j| j.mutual_information(&[3], &[1], &[2])))
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
        let epsilon = opts.epsilon.unwrap_or_else(|| {
            let mut sorted = rates.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.windows(2).map(|p| p[1] - p[0]).fold(0.02, f64::max)
        });
        Ok(Self { src, dist, opts, step, grid, rates, epsilon, cache: HashMap::new() })
    }

    fn point(&mut self, r_prime: f64, used: f64) -> Result<Option<CurvePoint>> {
        let feasible: Vec<usize> = (0..self.rates.len())
            .filter(|&i| self.rates[i] >= used - self.epsilon && self.rates[i] <= used + 1e-12)
            .collect();
        if feasible.is_empty() {
            return Ok(None);
        }
        let missing: Vec<usize> = feasible.iter().copied().filter(|i| !self.cache.contains_key(i)).collect();
        let (src, dist, gp_opts, grid) = (self.src, self.dist, self.opts.gp, &self.grid);
        let solved = par::map(&missing, |&i| -> Result<(f64, GpReport, Vec<f64>, f64)> {
            let b = build_case1_rd_gp(src, &grid.points[i], dist)?;
            let r = solve_gp(&b.problem, Some(&b.start), &gp_opts)?;
            let q = b.recover_q(&r);
            let m = b.multiplier(&r);
            Ok((r.value, r, q, m))
        });
        for (i, r) in missing.into_iter().zip(solved) {
            self.cache.insert(i, r?);
        }
        let best = feasible.iter().map(|i| self.cache[i].0).fold(f64::INFINITY, f64::min);
        let win = *feasible.iter().find(|i| self.cache[i].0 <= best + TIE_TOL).expect("nonempty");
        let (value, rep, q, mult) = &self.cache[&win];
        let w = self.grid.points[win].clone();
        let pair = Alphabet::new("XS1", self.src.x.size() * self.src.s1.size())?;
        let nt = q.len() / (pair.size() * self.opts.v1_size);
        let q = CondKernel::from_rows_unchecked(
            vec![pair, w.out_axes()[0].clone()],
            vec![Alphabet::new("T", nt)?],
            q.clone(),
        );
        Ok(Some(CurvePoint {
            r_prime,
            r_prime_used: used,
            value: *value,
            raw_value: *value,
            winning_w: Some(win),
            r_w: Some(self.rates[win]),
            iterations: rep.newton_steps,
            gap: rep.duality_measure,
            status: if rep.certified { PointStatus::Ok } else { PointStatus::InnerNonconverged },
            epsilon: self.epsilon,
            grid_step: self.step,
            w: Some(w),
            q: Some(q),
            multiplier: Some(*mult),
        }))
    }
}

/// Rate-distortion with a rate-`R'` description of `S1` at the decoder, at
/// distortion `D`: minimum over the description grid of the dual program.
pub fn rd_case1(src: &SourceInstance, r_prime: f64, dist: f64, opts: &Case1Options) -> Result<CurvePoint> {
    Ok(rd_case1_curve(src, &[r_prime], dist, opts)?.remove(0))
}

/// [`rd_case1`] over several rates sharing solves; values are made
/// nonincreasing in `R'` and floored at zero, which keeps them lower bounds.
pub fn rd_case1_curve(
    src: &SourceInstance,
    r_primes: &[f64],
    dist: f64,
    opts: &Case1Options,
) -> Result<Vec<CurvePoint>> {
    opts.gp.check()?;
    if !(opts.grid_step > 0.0 && opts.grid_step <= 1.0) || opts.v1_size == 0 {
        return arg("grid step must lie in (0, 1] and |V1| be at least 1");
    }
    if matches!(opts.epsilon, Some(e) if !(e > 0.0)) {
        return arg("epsilon must be positive");
    }
    if r_primes.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return arg("R' values must be finite and nonnegative");
    }
    let states = src.joint.marginalize(&[1, 2])?;
    let rmax = states.entropy() - states.marginalize(&[1])?.entropy();
    let mut base = Case1Grid::new(src, dist, *opts, opts.grid_step)?;
    let mut refined: Option<Case1Grid> = None;
    let mut out = Vec::with_capacity(r_primes.len());
    for &r in r_primes {
        let used = r.min(rmax);
        let mut pt = base.point(r, used)?;
        if pt.is_none() {
            if refined.is_none() {
                refined = Some(Case1Grid::new(src, dist, *opts, opts.grid_step / 2.0)?);
            }
            pt = refined.as_mut().expect("built above").point(r, used)?;
        }
        out.push(pt.unwrap_or_else(|| CurvePoint {
            r_prime: r,
            r_prime_used: used,
            value: f64::NAN,
            raw_value: f64::NAN,
            winning_w: None,
            r_w: None,
            iterations: 0,
            gap: f64::NAN,
            status: PointStatus::NoFeasibleW,
            epsilon: base.epsilon,
            grid_step: opts.grid_step / 2.0,
            w: None,
            q: None,
            multiplier: None,
        }));
    }
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[a].r_prime.total_cmp(&out[b].r_prime));
    let mut best = f64::INFINITY;
    for i in order {
        if out[i].raw_value.is_finite() {
            best = best.min(out[i].raw_value);
            out[i].value = best.max(0.0);
        }
    }
    Ok(out)
}
