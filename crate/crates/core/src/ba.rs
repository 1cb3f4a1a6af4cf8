//! Blahut-Arimoto style alternating solvers.
//!
//! Internally everything runs in nats; reported values are bits. Every
//! solver carries a certified bracket: `value` is attained by the returned
//! distribution and `gap` bounds its distance to the optimum.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{arg, Result};
use crate::instance::{ChannelInstance, WzSource};
use crate::prob::{Alphabet, CondKernel, ZERO_MASS};
use crate::strategy::{enumerate_strategies, lift_source, StrategySpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Target certified gap, bits.
    pub delta: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { delta: 1e-6, max_iters: 10_000 }
    }
}

impl SolveOptions {
    fn check(&self) -> Result<()> {
        if !(self.delta > 0.0) || self.max_iters == 0 {
            return arg("solver options need delta > 0 and a positive iteration cap");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub objective: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    /// Objective attained by `argopt`, bits.
    pub value: f64,
    /// Certified distance between `value` and the optimum, bits.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Distortion of the returned solution (distortion-constrained solvers).
    pub distortion: Option<f64>,
    /// Set when the requested distortion lies below the achievable floor and
    /// the floor's rate is reported instead.
    pub below_floor: bool,
    pub argopt: Vec<CondKernel>,
    /// Per iteration: attained objective and the opposite bound, bits.
    pub trace: Vec<TracePoint>,
}

#[inline]
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// SQUAREM step length for `l0 -> l1 -> l2`, at most `-1`.
pub(crate) fn squarem_alpha(l0: &[f64], l1: &[f64], l2: &[f64]) -> Option<f64> {
    let (mut rr, mut vv) = (0.0, 0.0);
    for i in 0..l0.len() {
        let (r, v) = (l1[i] - l0[i], l2[i] - 2.0 * l1[i] + l0[i]);
        if r.is_finite() && v.is_finite() {
            rr += r * r;
            vv += v * v;
        }
    }
    (vv > 1e-300).then(|| -(rr / vv).sqrt().max(1.0))
}

/// SQUAREM extrapolation with step length `alpha` on logs normalized in rows
/// of length `n`; entries that are not finite in all three keep `l2`.
pub(crate) fn squarem_at(l0: &[f64], l1: &[f64], l2: &[f64], n: usize, alpha: f64) -> Option<Vec<f64>> {
    let mut out: Vec<f64> = (0..l0.len())
        .map(|i| {
            let (r, v) = (l1[i] - l0[i], l2[i] - 2.0 * l1[i] + l0[i]);
            if r.is_finite() && v.is_finite() {
                l0[i] - 2.0 * alpha * r + alpha * alpha * v
            } else {
                l2[i]
            }
        })
        .collect();
    for row in out.chunks_mut(n) {
        let z = log_sum_exp(row.iter().copied());
        if !z.is_finite() {
            return None;
        }
        row.iter_mut().for_each(|l| *l -= z);
    }
    Some(out)
}

/// [`squarem_at`] with the default step length.
pub(crate) fn squarem(l0: &[f64], l1: &[f64], l2: &[f64], n: usize) -> Option<Vec<f64>> {
    squarem_at(l0, l1, l2, n, squarem_alpha(l0, l1, l2)?)
}

fn kernel_from_log(given: Alphabet, out: Alphabet, logq: &[f64]) -> CondKernel {
    let n = out.size();
    let mut probs: Vec<f64> = logq.iter().map(|l| l.exp()).collect();
    for row in probs.chunks_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    CondKernel::from_rows_unchecked(vec![given], vec![out], probs)
}

/// Channel capacity `max_{p(x)} I(X;Y)` of a kernel with a single given axis
/// and a single output axis (axes may be flattened products).
pub fn ba_capacity(kernel: &CondKernel, opts: &SolveOptions) -> Result<SolveReport> {
    opts.check()?;
    let (nx, ny) = (kernel.given_len(), kernel.out_len());
    let w = kernel.probs();
    let tol = opts.delta * LN_2;
    // (I, max_x D(x), D(x)) in nats for input law exp(lr)
    let eval = |lr: &[f64]| {
        let mut out = vec![0.0; ny];
        for x in 0..nx {
            let r = lr[x].exp();
            for y in 0..ny {
                out[y] += r * w[x * ny + y];
            }
        }
        let div: Vec<f64> = (0..nx)
            .map(|x| {
                (0..ny)
                    .map(|y| {
                        let p = w[x * ny + y];
                        if p > ZERO_MASS {
                            p * (p / out[y]).ln()
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect();
        let lower = lr.iter().zip(&div).map(|(l, d)| l.exp() * d).sum::<f64>().max(0.0);
        let upper = div.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower, upper, div)
    };
    let step = |lr: &[f64], div: &[f64]| {
        let z = log_sum_exp(lr.iter().zip(div).map(|(l, d)| l + d));
        lr.iter().zip(div).map(|(l, d)| l + d - z).collect::<Vec<f64>>()
    };
    let mut lr = vec![-(nx as f64).ln(); nx];
    let (mut lower, mut upper, mut div) = eval(&lr);
    let mut trace = vec![TracePoint { objective: lower / LN_2, bound: upper / LN_2 }];
    let mut iterations = 1;
    let mut converged = upper - lower < tol;
    // Two plain steps per update, replaced by the stabilized SQUAREM
    // extrapolation when that does better.
    while !converged && iterations + 3 <= opts.max_iters {
        let l1 = step(&lr, &div);
        let l2 = step(&l1, &eval(&l1).2);
        iterations += 2;
        let mut next = (eval(&l2), l2);
        if let Some(mut alpha) = squarem_alpha(&lr, &l1, &next.1) {
            // backtrack toward a plain step until the extrapolation is accepted
            while alpha < -1.0 && iterations < opts.max_iters {
                iterations += 1;
                if let Some(e) = squarem_at(&lr, &l1, &next.1, nx, alpha) {
                    let e = step(&e, &eval(&e).2);
                    let ev = eval(&e);
                    if ev.0 >= lower && (ev.0 >= next.0 .0 || ev.1 - ev.0 < next.0 .1 - next.0 .0) {
                        next = (ev, e);
                        break;
                    }
                }
                alpha = (alpha - 1.0) / 2.0;
                if alpha > -1.5 {
                    break;
                }
            }
        }
        ((lower, upper, div), lr) = next;
        trace.push(TracePoint { objective: lower / LN_2, bound: upper / LN_2 });
        converged = upper - lower < tol;
    }
    let r: Vec<f64> = lr.iter().map(|l| l.exp()).collect();
    let given = Alphabet::new("X", nx)?;
    Ok(SolveReport {
        value: lower / LN_2,
        gap: (upper - lower).max(0.0) / LN_2,
        iterations,
        converged,
        distortion: None,
        below_floor: false,
        argopt: vec![CondKernel::from_rows_unchecked(vec![], vec![given], r)],
        trace,
    })
}

/// Weight of the uniform law mixed into warm starts.
pub(crate) const WARM_MIX: f64 = 1e-2;

/// One solve of the Lagrangian `min_q I(q) + lambda * (E d - D_min)`.
#[derive(Clone, Debug)]
pub(crate) struct LagPoint {
    pub lambda: f64,
    /// Lagrangian at the returned iterate, nats.
    pub f: f64,
    /// Certified lower bound on the Lagrangian minimum, nats.
    pub lb: f64,
    pub rate: f64,
    pub dist: f64,
    /// `ln q(t|x)`, row-major `nx x nt`; `-inf` marks excluded entries.
    pub logq: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Problems of the form `min I(q)` subject to a linear distortion budget,
/// where `I` is convex in the row-stochastic matrix `q`.
pub(crate) trait Lagrangian {
    fn dmin(&self) -> f64;
    /// Smallest strictly positive distortion value, sets the multiplier range.
    fn min_positive_distortion(&self) -> f64;
    /// Best deterministic zero-rate solution: (distortion, log q).
    fn zero_rate(&self) -> (f64, Vec<f64>);
    /// `lambda = f64::INFINITY` restricts each row to its minimum-distortion
    /// entries.
    fn solve(&self, lambda: f64, warm: Option<&[f64]>, tol: f64, max_iters: usize) -> LagPoint;
    /// (rate, distortion) of an arbitrary `log q`, nats.
    fn rate_dist(&self, logq: &[f64]) -> (f64, f64);
    /// Gradient of the rate at `logq` split as `a + lambda * b`, row-major
    /// `nx x nt`, with the row width. `None` when the rate is not
    /// differentiable there (some entry is zero).
    fn gradient(&self, logq: &[f64]) -> Option<(Vec<f64>, Vec<f64>, usize)>;

    /// Lower bound on the constrained minimum from the linearization at
    /// `logq`: `max_lambda sum_x min_t (a + lambda b) - lambda * slack`.
    fn dual_bound(&self, logq: &[f64], slack: f64, lambda_max: f64) -> f64 {
        let Some((a, b, nt)) = self.gradient(logq) else {
            return f64::NEG_INFINITY;
        };
        let phi = |lambda: f64| {
            a.chunks(nt)
                .zip(b.chunks(nt))
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + lambda * y).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                - lambda * slack
        };
        let (mut lo, mut hi) = (0.0, lambda_max);
        let mut best = phi(0.0);
        let mut c = hi - GOLDEN * (hi - lo);
        let mut d = lo + GOLDEN * (hi - lo);
        let (mut fc, mut fd) = (phi(c), phi(d));
        for _ in 0..90 {
            best = best.max(fc).max(fd);
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - GOLDEN * (hi - lo);
                fc = phi(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + GOLDEN * (hi - lo);
                fd = phi(d);
            }
        }
        best.max(fc).max(fd)
    }
}

pub(crate) struct SweepResult {
    pub value: f64,
    pub gap: f64,
    pub dist: f64,
    pub logq: Vec<f64>,
    pub below_floor: bool,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

struct SweepState<'a, P> {
    p: &'a P,
    d_target: f64,
    dmin: f64,
    points: Vec<LagPoint>,
    best_lb: f64,
    best_ub: f64,
    best_q: Vec<f64>,
    best_dist: f64,
    lambda_max: f64,
    trace: Vec<TracePoint>,
}

impl<P: Lagrangian> SweepState<'_, P> {
    /// Smallest Lagrangian among evaluated solutions; an upper bound on the
    /// Lagrangian minimum at `lambda`.
    fn envelope(&self, lambda: f64) -> f64 {
        self.points.iter().map(|pt| pt.rate + lambda * (pt.dist - self.dmin)).fold(f64::INFINITY, f64::min)
    }

    fn warm_start(&self, lambda: f64) -> Vec<f64> {
        self.points
            .iter()
            .filter(|pt| pt.lambda.is_finite() && pt.lambda > 0.0)
            .min_by(|a, b| (a.lambda - lambda).abs().total_cmp(&(b.lambda - lambda).abs()))
            .unwrap_or(&self.points[0])
            .logq
            .clone()
    }

    fn absorb(&mut self, pt: LagPoint) {
        let slack = self.d_target - self.dmin;
        let linearized = self.p.dual_bound(&pt.logq, slack, self.lambda_max);
        self.best_lb = self.best_lb.max(pt.lb - pt.lambda * slack).max(linearized);
        self.points.push(pt);
        self.refresh_upper();
    }

    /// Mixes the pair of solutions straddling the budget whose interpolated
    /// rate is smallest, and the tightest straddling pair, at exactly the
    /// budget. The mixture's rate never exceeds the interpolation.
    fn refresh_upper(&mut self) {
        let d = self.d_target;
        let (mut hull, mut tight) = ((f64::INFINITY, 0, 0), (f64::INFINITY, 0, 0));
        for (i, l) in self.points.iter().enumerate().filter(|(_, l)| l.dist <= d) {
            for (j, r) in self.points.iter().enumerate().filter(|(_, r)| r.dist >= d) {
                let width = r.dist - l.dist;
                let theta = if width > 0.0 { (r.dist - d) / width } else { 1.0 };
                let interp = theta * l.rate + (1.0 - theta) * r.rate;
                if interp < hull.0 {
                    hull = (interp, i, j);
                }
                if width < tight.0 {
                    tight = (width, i, j);
                }
            }
        }
        for (_, i, j) in [hull, tight] {
            let (l, r) = (&self.points[i], &self.points[j]);
            let width = r.dist - l.dist;
            let theta = if width > 0.0 { ((r.dist - d) / width).clamp(0.0, 1.0) } else { 1.0 };
            let mixed: Vec<f64> =
                l.logq.iter().zip(&r.logq).map(|(a, b)| (theta * a.exp() + (1.0 - theta) * b.exp()).ln()).collect();
            let (rate, dist) = self.p.rate_dist(&mixed);
            if rate < self.best_ub && dist <= d + 1e-12 {
                let bound = self.p.dual_bound(&mixed, d - self.dmin, self.lambda_max);
                self.best_lb = self.best_lb.max(bound);
                self.best_ub = rate;
                self.best_q = mixed;
                self.best_dist = dist;
            }
        }
        self.trace.push(TracePoint { objective: self.best_ub / LN_2, bound: self.best_lb / LN_2 });
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Distortion-constrained minimum via the concave dual
/// `max_lambda F*(lambda) - lambda (D - D_min)`.
///
/// Golden-section search over the multiplier supplies lower bounds; the upper
/// bound is the rate of the mixture of the two evaluated solutions that
/// bracket `D` most tightly, mixed to meet the budget exactly. Stops once the
/// bracket is certified to `delta` or the multiplier interval collapses.
pub(crate) fn sweep<P: Lagrangian>(p: &P, d_target: f64, opts: &SolveOptions) -> Result<SweepResult> {
    opts.check()?;
    if !(d_target >= 0.0) || !d_target.is_finite() {
        return arg(format!("distortion budget must be finite and nonnegative, got {d_target}"));
    }
    let tol = opts.delta * LN_2;
    let inner_tol = tol * 0.05;
    let dmin = p.dmin();
    let (dmax, zero_q) = p.zero_rate();
    if d_target >= dmax {
        return Ok(SweepResult {
            value: 0.0,
            gap: 0.0,
            dist: dmax,
            logq: zero_q,
            below_floor: false,
            converged: true,
            iterations: 0,
            trace: vec![TracePoint { objective: 0.0, bound: 0.0 }],
        });
    }
    let floor = p.solve(f64::INFINITY, None, inner_tol, opts.max_iters);
    let mut iterations = floor.iterations;
    if d_target <= dmin + 1e-12 {
        let gap = (floor.f - floor.lb).max(0.0);
        return Ok(SweepResult {
            value: floor.rate / LN_2,
            gap: gap / LN_2,
            dist: floor.dist,
            logq: floor.logq,
            below_floor: d_target < dmin - 1e-12,
            converged: floor.converged && gap < tol,
            iterations,
            trace: vec![TracePoint { objective: floor.rate / LN_2, bound: floor.lb / LN_2 }],
        });
    }

    let slack = d_target - dmin;
    let gmax = 50.0 / p.min_positive_distortion();
    let zero =
        LagPoint { lambda: 0.0, f: 0.0, lb: 0.0, rate: 0.0, dist: dmax, logq: zero_q, iterations: 0, converged: true };
    let mut sw = SweepState {
        p,
        d_target,
        dmin,
        points: vec![floor, zero],
        best_lb: 0.0,
        best_ub: f64::INFINITY,
        best_q: Vec::new(),
        best_dist: dmax,
        lambda_max: gmax,
        trace: Vec::new(),
    };
    sw.refresh_upper();

    let (mut lo, mut hi) = (0.0, gmax);
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let mut eval = |lambda: f64, sw: &mut SweepState<'_, P>| {
        let warm = sw.warm_start(lambda);
        let pt = p.solve(lambda, Some(&warm), inner_tol, opts.max_iters);
        iterations += pt.iterations;
        sw.absorb(pt);
        sw.envelope(lambda) - lambda * slack
    };
    let mut hc = eval(c, &mut sw);
    let mut hd = eval(d, &mut sw);
    let mut steps = 0;
    while sw.best_ub - sw.best_lb >= tol && hi - lo > 1e-13 * gmax && steps < 200 {
        steps += 1;
        if hc >= hd {
            hi = d;
            d = c;
            hd = hc;
            c = hi - GOLDEN * (hi - lo);
            hc = eval(c, &mut sw);
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + GOLDEN * (hi - lo);
            hd = eval(d, &mut sw);
        }
    }
    let SweepState { best_lb, best_ub, best_q, best_dist, trace, .. } = sw;
    let gap = (best_ub - best_lb).max(0.0);
    Ok(SweepResult {
        value: best_ub / LN_2,
        gap: gap / LN_2,
        dist: best_dist,
        logq: best_q,
        below_floor: false,
        converged: gap < tol,
        iterations,
        trace,
    })
}

/// Classic rate-distortion `min I(X;X̂)` for a memoryless source `p(x)` and
/// distortion matrix `d` (row-major `|X| x |X̂|`).
pub struct RdProblem {
    nx: usize,
    nxh: usize,
    px: Vec<f64>,
    d: Vec<f64>,
    excess: Vec<f64>,
    dmin: f64,
}

impl RdProblem {
    pub fn new(px: &[f64], d: &[f64], nxh: usize) -> Result<Self> {
        let nx = px.len();
        if nx == 0 || nxh == 0 || d.len() != nx * nxh {
            return arg("distortion matrix shape does not match the source and reconstruction alphabets");
        }
        if px.iter().any(|p| !(*p >= 0.0)) || (px.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return arg("source distribution must be a pmf");
        }
        if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return arg("distortion entries must be finite and nonnegative");
        }
        let mut excess = vec![0.0; nx * nxh];
        let mut dmin = 0.0;
        for x in 0..nx {
            let row = &d[x * nxh..(x + 1) * nxh];
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            dmin += px[x] * m;
            for k in 0..nxh {
                excess[x * nxh + k] = row[k] - m;
            }
        }
        Ok(Self { nx, nxh, px: px.to_vec(), d: d.to_vec(), excess, dmin })
    }

    /// `exp(-lambda * excess)` with the convention that an infinite
    /// multiplier keeps exactly the zero-excess entries.
    #[inline]
    fn log_weight(&self, lambda: f64, x: usize, k: usize) -> f64 {
        let e = self.excess[x * self.nxh + k];
        if lambda.is_infinite() {
            if e <= 1e-12 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -lambda * e
        }
    }

    /// Conditional `ln Q(x̂|x)` induced by output law `ln r`.
    fn conditional(&self, lambda: f64, logr: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut logq = vec![f64::NEG_INFINITY; self.nx * self.nxh];
        let mut logc = vec![0.0; self.nx];
        for x in 0..self.nx {
            let terms = (0..self.nxh).map(|k| logr[k] + self.log_weight(lambda, x, k));
            logc[x] = log_sum_exp(terms.clone());
            for (k, t) in terms.enumerate() {
                logq[x * self.nxh + k] = t - logc[x];
            }
        }
        (logq, logc)
    }
}

impl Lagrangian for RdProblem {
    fn gradient(&self, logq: &[f64]) -> Option<(Vec<f64>, Vec<f64>, usize)> {
        let logr = self.output_law(logq);
        let n = self.nx * self.nxh;
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        for x in (0..self.nx).filter(|&x| self.px[x] > 0.0) {
            for k in 0..self.nxh {
                let i = x * self.nxh + k;
                if !logq[i].is_finite() {
                    return None;
                }
                a[i] = self.px[x] * (logq[i] - logr[k]);
                b[i] = self.px[x] * self.excess[i];
            }
        }
        Some((a, b, self.nxh))
    }

    fn dmin(&self) -> f64 {
        self.dmin
    }

    fn min_positive_distortion(&self) -> f64 {
        self.d.iter().copied().filter(|v| *v > 1e-12).fold(f64::INFINITY, f64::min).min(1.0)
    }

    fn zero_rate(&self) -> (f64, Vec<f64>) {
        let (best, dist) = (0..self.nxh)
            .map(|k| (k, (0..self.nx).map(|x| self.px[x] * self.d[x * self.nxh + k]).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
        let logq =
            (0..self.nx * self.nxh).map(|i| if i % self.nxh == best { 0.0 } else { f64::NEG_INFINITY }).collect();
        (dist, logq)
    }

    fn solve(&self, lambda: f64, warm: Option<&[f64]>, tol: f64, max_iters: usize) -> LagPoint {
        let mut logr: Vec<f64> = match warm {
            Some(q) => self.output_law(q),
            None => vec![-(self.nxh as f64).ln(); self.nxh],
        };
        // Revive outputs a warm start may have dropped.
        let floor = -700.0;
        logr.iter_mut().for_each(|l| *l = l.max(floor));
        let mut iterations = 0;
        let mut converged = false;
        let (mut logq, mut f, mut lb);
        loop {
            iterations += 1;
            let (q, logc) = self.conditional(lambda, &logr);
            logq = q;
            let new_r = self.output_law(&logq);
            let (rate, dist) = self.rate_dist(&logq);
            f = rate + if lambda.is_infinite() { 0.0 } else { lambda * (dist - self.dmin) };
            let worst = (0..self.nxh)
                .map(|k| {
                    log_sum_exp(
                        (0..self.nx)
                            .filter(|&x| self.px[x] > 0.0)
                            .map(|x| self.px[x].ln() + self.log_weight(lambda, x, k) - logc[x]),
                    )
                })
                .fold(f64::NEG_INFINITY, f64::max);
            lb = -(0..self.nx).map(|x| self.px[x] * logc[x]).sum::<f64>() - worst;
            logr = new_r;
            if f - lb < tol {
                converged = true;
                break;
            }
            if iterations >= max_iters {
                break;
            }
        }
        let (rate, dist) = self.rate_dist(&logq);
        LagPoint { lambda, f, lb, rate, dist, logq, iterations, converged }
    }

    fn rate_dist(&self, logq: &[f64]) -> (f64, f64) {
        let logr = self.output_law(logq);
        let (mut rate, mut dist) = (0.0, 0.0);
        for x in 0..self.nx {
            for k in 0..self.nxh {
                let l = logq[x * self.nxh + k];
                if l == f64::NEG_INFINITY || self.px[x] == 0.0 {
                    continue;
                }
                let q = l.exp();
                rate += self.px[x] * q * (l - logr[k]);
                dist += self.px[x] * q * self.d[x * self.nxh + k];
            }
        }
        (rate.max(0.0), dist)
    }
}

impl RdProblem {
    fn output_law(&self, logq: &[f64]) -> Vec<f64> {
        (0..self.nxh)
            .map(|k| {
                log_sum_exp(
                    (0..self.nx).filter(|&x| self.px[x] > 0.0).map(|x| self.px[x].ln() + logq[x * self.nxh + k]),
                )
            })
            .collect()
    }
}

/// `R(D) = min I(X;X̂)` subject to `E d(X,X̂) <= D`.
pub fn ba_rate_distortion(px: &[f64], d: &[f64], nxh: usize, dist: f64, opts: &SolveOptions) -> Result<SolveReport> {
    let problem = RdProblem::new(px, d, nxh)?;
    let res = sweep(&problem, dist, opts)?;
    Ok(SolveReport {
        value: res.value,
        gap: res.gap,
        iterations: res.iterations,
        converged: res.converged,
        distortion: Some(res.dist),
        below_floor: res.below_floor,
        argopt: vec![kernel_from_log(Alphabet::new("X", px.len())?, Alphabet::new("Xhat", nxh)?, &res.logq)],
        trace: res.trace,
    })
}

/// Wyner-Ziv primal over strategy distributions `q(t|x)`:
/// `min I(T;X|S)` subject to `sum p(x,s) q(t|x) d(x, t(s)) <= D`.
pub struct WzProblem {
    pub(crate) nx: usize,
    pub(crate) ns: usize,
    pub(crate) nt: usize,
    pub(crate) pxs: Vec<f64>,
    pub(crate) px: Vec<f64>,
    /// `ln p(x|s)`, row-major `nx x ns`; `-inf` where zero.
    pub(crate) log_px_s: Vec<f64>,
    /// `p(s|x)`, row-major `nx x ns`.
    pub(crate) ps_x: Vec<f64>,
    /// Expected distortion `e(x,t) = sum_s p(s|x) d(x,t(s))`.
    pub(crate) e: Vec<f64>,
    pub(crate) excess: Vec<f64>,
    pub(crate) dmin: f64,
    min_pos_d: f64,
    strategies: StrategySpace,
    pub(crate) x_alphabet: Alphabet,
}

impl WzProblem {
    pub fn new(src: &WzSource) -> Result<Self> {
        let strategies = enumerate_strategies(std::slice::from_ref(&src.s), &src.xhat)?;
        Self::with_strategies(src, strategies)
    }

    pub fn with_strategies(src: &WzSource, strategies: StrategySpace) -> Result<Self> {
        let lifted = lift_source(src, &strategies)?;
        let (nx, ns, nt) = (src.x.size(), src.s.size(), strategies.len());
        let pxs = src.joint.probs().to_vec();
        let px: Vec<f64> = (0..nx).map(|x| pxs[x * ns..(x + 1) * ns].iter().sum()).collect();
        let ps: Vec<f64> = (0..ns).map(|s| (0..nx).map(|x| pxs[x * ns + s]).sum()).collect();
        let mut log_px_s = vec![f64::NEG_INFINITY; nx * ns];
        let mut ps_x = vec![0.0; nx * ns];
        for x in 0..nx {
            for s in 0..ns {
                let j = pxs[x * ns + s];
                if j > 0.0 {
                    log_px_s[x * ns + s] = (j / ps[s]).ln();
                    ps_x[x * ns + s] = j / px[x];
                }
            }
        }
        let mut e = vec![0.0; nx * nt];
        let mut excess = vec![0.0; nx * nt];
        let mut dmin = 0.0;
        for x in 0..nx {
            for t in 0..nt {
                e[x * nt + t] = (0..ns).map(|s| ps_x[x * ns + s] * lifted.get(x, t, s)).sum();
            }
            let m = e[x * nt..(x + 1) * nt].iter().copied().fold(f64::INFINITY, f64::min);
            dmin += px[x] * m;
            for t in 0..nt {
                excess[x * nt + t] = e[x * nt + t] - m;
            }
        }
        let min_pos_d = src.distortion.iter().copied().filter(|v| *v > 1e-12).fold(1.0f64, f64::min);
        Ok(Self {
            nx,
            ns,
            nt,
            pxs,
            px,
            log_px_s,
            ps_x,
            e,
            excess,
            dmin,
            min_pos_d,
            strategies,
            x_alphabet: src.x.clone(),
        })
    }

    pub fn strategies(&self) -> &StrategySpace {
        &self.strategies
    }

    pub fn distortion_floor(&self) -> f64 {
        self.dmin
    }

    #[inline]
    fn allowed(&self, lambda: f64, x: usize, t: usize) -> bool {
        !lambda.is_infinite() || self.excess[x * self.nt + t] <= 1e-12
    }

    #[inline]
    fn penalty(&self, lambda: f64, i: usize) -> f64 {
        if lambda.is_infinite() {
            0.0
        } else {
            lambda * self.excess[i]
        }
    }

    fn lagrangian(&self, lambda: f64, logq: &[f64]) -> f64 {
        let (rate, dist) = self.rate_dist(logq);
        rate + if lambda.is_infinite() { 0.0 } else { lambda * (dist - self.dmin) }
    }

    /// Lagrangian at `logq` and its linearization lower bound.
    fn evaluate(&self, lambda: f64, logq: &[f64]) -> (f64, f64) {
        let (nx, ns, nt) = (self.nx, self.ns, self.nt);
        let log_q_big = self.log_big_q(logq);
        let (mut f, mut lb) = (0.0, 0.0);
        for x in (0..nx).filter(|&x| self.px[x] > 0.0) {
            let mut gmin = f64::INFINITY;
            for t in 0..nt {
                let l = logq[x * nt + t];
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let g: f64 = (0..ns)
                    .filter(|&s| self.pxs[x * ns + s] > 0.0)
                    .map(|s| self.pxs[x * ns + s] * (l - log_q_big[s * nt + t]))
                    .sum::<f64>()
                    + self.px[x] * self.penalty(lambda, x * nt + t);
                f += l.exp() * g;
                gmin = gmin.min(g);
            }
            lb += gmin;
        }
        (f, lb)
    }

    /// One alternating update: `Q` from `q`, then `q` from `Q`.
    fn step(&self, lambda: f64, logq: &[f64]) -> Vec<f64> {
        let (nx, ns, nt) = (self.nx, self.ns, self.nt);
        let log_q_big = self.log_big_q(logq);
        let mut out = logq.to_vec();
        for x in (0..nx).filter(|&x| self.px[x] > 0.0) {
            for t in 0..nt {
                if out[x * nt + t] == f64::NEG_INFINITY {
                    continue;
                }
                out[x * nt + t] = (0..ns)
                    .filter(|&s| self.ps_x[x * ns + s] > 0.0)
                    .map(|s| self.ps_x[x * ns + s] * log_q_big[s * nt + t])
                    .sum::<f64>()
                    - self.penalty(lambda, x * nt + t);
            }
            let row = &mut out[x * nt..(x + 1) * nt];
            let z = log_sum_exp(row.iter().copied());
            row.iter_mut().for_each(|l| *l -= z);
        }
        out
    }

    /// `ln Q(t|s)` for the mixture `Q(t|s) = sum_x p(x|s) q(t|x)`.
    fn log_big_q(&self, logq: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.ns * self.nt];
        for s in 0..self.ns {
            for t in 0..self.nt {
                out[s * self.nt + t] = log_sum_exp(
                    (0..self.nx)
                        .filter(|&x| self.log_px_s[x * self.ns + s] > f64::NEG_INFINITY)
                        .map(|x| self.log_px_s[x * self.ns + s] + logq[x * self.nt + t]),
                );
            }
        }
        out
    }

    /// `(I(T;X|S), E d)` in (bits, distortion units) for a strategy kernel
    /// `q(t|x)`.
    pub fn objective(&self, q: &CondKernel) -> Result<(f64, f64)> {
        if q.given_len() != self.nx || q.out_len() != self.nt {
            return arg("strategy kernel shape does not match the problem");
        }
        let logq: Vec<f64> = q.probs().iter().map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect();
        let (r, d) = self.rate_dist(&logq);
        Ok((r / LN_2, d))
    }
}

impl Lagrangian for WzProblem {
    fn gradient(&self, logq: &[f64]) -> Option<(Vec<f64>, Vec<f64>, usize)> {
        let (nx, ns, nt) = (self.nx, self.ns, self.nt);
        let log_q_big = self.log_big_q(logq);
        let (mut a, mut b) = (vec![0.0; nx * nt], vec![0.0; nx * nt]);
        for x in (0..nx).filter(|&x| self.px[x] > 0.0) {
            for t in 0..nt {
                let i = x * nt + t;
                if !logq[i].is_finite() {
                    return None;
                }
                a[i] = (0..ns)
                    .filter(|&s| self.pxs[x * ns + s] > 0.0)
                    .map(|s| self.pxs[x * ns + s] * (logq[i] - log_q_big[s * nt + t]))
                    .sum();
                b[i] = self.px[x] * self.excess[i];
            }
        }
        Some((a, b, nt))
    }

    fn dmin(&self) -> f64 {
        self.dmin
    }

    fn min_positive_distortion(&self) -> f64 {
        self.min_pos_d
    }

    fn zero_rate(&self) -> (f64, Vec<f64>) {
        let (best, dist) = (0..self.nt)
            .map(|t| (t, (0..self.nx).map(|x| self.px[x] * self.e[x * self.nt + t]).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, (t, v)| if v < acc.1 { (t, v) } else { acc });
        let logq = (0..self.nx * self.nt).map(|i| if i % self.nt == best { 0.0 } else { f64::NEG_INFINITY }).collect();
        (dist, logq)
    }

    fn solve(&self, lambda: f64, warm: Option<&[f64]>, tol: f64, max_iters: usize) -> LagPoint {
        let (nx, nt) = (self.nx, self.nt);
        let mut logq = vec![f64::NEG_INFINITY; nx * nt];
        for x in 0..nx {
            let allowed: Vec<usize> = (0..nt).filter(|&t| self.allowed(lambda, x, t)).collect();
            let u = -(allowed.len() as f64).ln();
            for &t in &allowed {
                logq[x * nt + t] = match warm {
                    // a little uniform mass keeps every strategy recoverable
                    Some(w) => log_sum_exp([(1.0 - WARM_MIX).ln() + w[x * nt + t], WARM_MIX.ln() + u].into_iter()),
                    None => u,
                };
            }
            if warm.is_some() {
                let z = log_sum_exp(allowed.iter().map(|&t| logq[x * nt + t]));
                allowed.iter().for_each(|&t| logq[x * nt + t] -= z);
            }
        }
        let mut iterations = 0;
        let mut converged = false;
        let (mut f, mut lb);
        loop {
            iterations += 1;
            (f, lb) = self.evaluate(lambda, &logq);
            if f - lb < tol {
                converged = true;
                break;
            }
            if iterations + 3 > max_iters {
                break;
            }
            // SQUAREM on two alternating steps, backtracking toward a plain
            // step until the extrapolation does not raise the Lagrangian.
            let q1 = self.step(lambda, &logq);
            let q2 = self.step(lambda, &q1);
            iterations += 2;
            let plain = self.lagrangian(lambda, &q2);
            let mut next = q2;
            if let Some(mut alpha) = squarem_alpha(&logq, &q1, &next) {
                while alpha < -1.0 && iterations < max_iters {
                    iterations += 1;
                    if let Some(e) = squarem_at(&logq, &q1, &next, nt, alpha) {
                        let e = self.step(lambda, &e);
                        if self.lagrangian(lambda, &e) <= plain {
                            next = e;
                            break;
                        }
                    }
                    alpha = (alpha - 1.0) / 2.0;
                    if alpha > -1.5 {
                        break;
                    }
                }
            }
            logq = next;
        }
        let (rate, dist) = self.rate_dist(&logq);
        LagPoint { lambda, f, lb, rate, dist, logq, iterations, converged }
    }

    fn rate_dist(&self, logq: &[f64]) -> (f64, f64) {
        let (nx, ns, nt) = (self.nx, self.ns, self.nt);
        let log_q_big = self.log_big_q(logq);
        let (mut rate, mut dist) = (0.0, 0.0);
        for x in 0..nx {
            if self.px[x] == 0.0 {
                continue;
            }
            for t in 0..nt {
                let l = logq[x * nt + t];
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let q = l.exp();
                dist += self.px[x] * q * self.e[x * nt + t];
                for s in 0..ns {
                    let j = self.pxs[x * ns + s];
                    if j > 0.0 {
                        rate += j * q * (l - log_q_big[s * nt + t]);
                    }
                }
            }
        }
        (rate.max(0.0), dist)
    }
}

/// Wyner-Ziv rate by alternating minimization over strategy distributions.
/// `argopt[0]` is `q(t|x)` over the strategies returned by
/// [`WzProblem::strategies`].
pub fn wz_primal(src: &WzSource, dist: f64, opts: &SolveOptions) -> Result<SolveReport> {
    let problem = WzProblem::new(src)?;
    wz_primal_on(&problem, dist, opts)
}

pub fn wz_primal_on(problem: &WzProblem, dist: f64, opts: &SolveOptions) -> Result<SolveReport> {
    let res = sweep(problem, dist, opts)?;
    Ok(SolveReport {
        value: res.value,
        gap: res.gap,
        iterations: res.iterations,
        converged: res.converged,
        distortion: Some(res.dist),
        below_floor: res.below_floor,
        argopt: vec![kernel_from_log(problem.x_alphabet.clone(), problem.strategies.alphabet("T"), &res.logq)],
        trace: res.trace,
    })
}

/// Strategy channel: encoder state `E`, strategy `T: E -> X`, decoder output
/// `O`. `k[(e * nt + t) * no + o]` is `p(e, o | t)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyChannel {
    pub ne: usize,
    pub nt: usize,
    pub no: usize,
    pub k: Vec<f64>,
}

impl StrategyChannel {
    /// Encoder sees `S1` (or `(S1, S2)` when `encoder_sees_s2`), decoder
    /// sees `O = (Y, S2)`, indexed `y * |S2| + s2`.
    pub fn from_channel(ch: &ChannelInstance, encoder_sees_s2: bool) -> Result<Self> {
        let (ns1, ns2, ny) = (ch.s1.size(), ch.s2.size(), ch.y.size());
        let e_axes = if encoder_sees_s2 { vec![ch.s1.clone(), ch.s2.clone()] } else { vec![ch.s1.clone()] };
        let sp = enumerate_strategies(&e_axes, &ch.x)?;
        let ne = sp.domain_len();
        let (nt, no) = (sp.len(), ny * ns2);
        let mut k = vec![0.0; ne * nt * no];
        for t in 0..nt {
            for s1 in 0..ns1 {
                for s2 in 0..ns2 {
                    let e = if encoder_sees_s2 { s1 * ns2 + s2 } else { s1 };
                    let x = sp.apply(t, e);
                    for y in 0..ny {
                        k[(e * nt + t) * no + y * ns2 + s2] += ch.p_s(s1, s2) * ch.p_y(y, x, s1, s2);
                    }
                }
            }
        }
        Ok(Self { ne, nt, no, k })
    }

    fn p_e(&self) -> Vec<f64> {
        (0..self.ne).map(|e| self.k[e * self.nt * self.no..e * self.nt * self.no + self.no].iter().sum()).collect()
    }
}

/// `max_{q(t|e)} I(T;O) - I(T;E)` by alternating maximization, certified by
/// the per-state maximum bound.
pub fn gp_channel_capacity(ch: &StrategyChannel, opts: &SolveOptions) -> Result<SolveReport> {
    opts.check()?;
    let StrategyChannel { ne, nt, no, .. } = *ch;
    let k = &ch.k;
    let pe = ch.p_e();
    let tol = opts.delta * LN_2;
    let mut logq = vec![-(nt as f64).ln(); ne * nt];
    let mut log_big = vec![-(nt as f64).ln(); no * nt];
    let mut trace = Vec::new();
    let (mut value, mut upper) = (0.0, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    let kk = |e: usize, t: usize, o: usize| k[(e * nt + t) * no + o];
    while iterations < opts.max_iters {
        iterations += 1;
        for e in 0..ne {
            if pe[e] <= 0.0 {
                continue;
            }
            for t in 0..nt {
                logq[e * nt + t] =
                    (0..no).filter(|&o| kk(e, t, o) > 0.0).map(|o| kk(e, t, o) / pe[e] * log_big[o * nt + t]).sum();
            }
            let row = &mut logq[e * nt..(e + 1) * nt];
            let z = log_sum_exp(row.iter().copied());
            row.iter_mut().for_each(|l| *l -= z);
        }
        for o in 0..no {
            let col: Vec<f64> = (0..nt)
                .map(|t| {
                    log_sum_exp((0..ne).filter(|&e| kk(e, t, o) > 0.0).map(|e| logq[e * nt + t] + kk(e, t, o).ln()))
                })
                .collect();
            let z = log_sum_exp(col.iter().copied());
            for t in 0..nt {
                log_big[o * nt + t] = if z == f64::NEG_INFINITY { -(nt as f64).ln() } else { col[t] - z };
            }
        }
        value = 0.0;
        upper = 0.0;
        for e in 0..ne {
            if pe[e] <= 0.0 {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for t in 0..nt {
                let lq = logq[e * nt + t];
                let inner: f64 =
                    (0..no).filter(|&o| kk(e, t, o) > 0.0).map(|o| kk(e, t, o) * (log_big[o * nt + t] - lq)).sum();
                value += lq.exp() * inner;
                best = best.max(inner);
            }
            upper += best;
        }
        trace.push(TracePoint { objective: value / LN_2, bound: upper / LN_2 });
        if upper - value < tol {
            converged = true;
            break;
        }
    }
    let e_ab = Alphabet::new("E", ne)?;
    Ok(SolveReport {
        value: value / LN_2,
        gap: (upper - value).max(0.0) / LN_2,
        iterations,
        converged,
        distortion: None,
        below_floor: false,
        argopt: vec![kernel_from_log(e_ab, Alphabet::new("T", nt)?, &logq)],
        trace,
    })
}
