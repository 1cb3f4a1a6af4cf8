//! Case-2 capacity with a rate-limited description of the decoder's state
//! at the encoder: grid search over the description kernel `w(v2|s2)` with an
//! alternating inner maximization over strategy distributions.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use serde::Serialize;

use crate::ba::{ba_capacity, log_sum_exp, squarem, SolveOptions, TracePoint};
use crate::error::{arg, Result};
use crate::instance::ChannelInstance;
use crate::par;
use crate::prob::{simplex_grid, Alphabet, CondKernel, JointPmf, SimplexGrid};
use crate::strategy::{enumerate_strategies, lift_channel, StrategySpace};

/// Inner values within this distance of the best count as ties.
pub const TIE_TOL: f64 = 1e-9;
/// Slack on the upper edge of the feasibility band.
pub const BAND_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Case2Options {
    /// Width of the feasibility band below `R'`, bits. `None` picks
    /// `max(0.02, largest spacing between sorted grid rates)`.
    pub epsilon: Option<f64>,
    /// Inner termination threshold on `U_w - J_w`, bits.
    pub delta: f64,
    pub grid_step: f64,
    pub v2_size: usize,
    pub max_inner_iters: usize,
}

impl Default for Case2Options {
    fn default() -> Self {
        Self { epsilon: None, delta: 1e-6, grid_step: 0.05, v2_size: 2, max_inner_iters: 5000 }
    }
}

impl Case2Options {
    fn check(&self) -> Result<()> {
        if matches!(self.epsilon, Some(e) if !(e > 0.0)) {
            return arg("epsilon must be positive");
        }
        if !(self.delta > 0.0) || self.max_inner_iters == 0 {
            return arg("delta must be positive and the inner iteration cap nonzero");
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return arg("grid step must lie in (0, 1]");
        }
        if self.v2_size == 0 {
            return arg("|V2| must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Ok,
    NoFeasibleW,
    InnerNonconverged,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::NoFeasibleW => "no-feasible-w",
            PointStatus::InnerNonconverged => "inner-nonconverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Requested rate, bits.
    pub r_prime: f64,
    /// Rate after clamping to the largest useful value.
    pub r_prime_used: f64,
    /// Value after the running-extremum pass; rate-distortion values are
    /// also floored at zero.
    pub value: f64,
    pub raw_value: f64,
    /// Index of the winning kernel in the grid actually searched.
    pub winning_w: Option<usize>,
    /// Rate functional of the winning kernel.
    pub r_w: Option<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub status: PointStatus,
    pub epsilon: f64,
    pub grid_step: f64,
    /// Winning `w(v|s)`.
    pub w: Option<CondKernel>,
    /// Winning strategy distribution: `q(t|s1,v2)` for the noncausal case,
    /// `p(u|v2)` for the causal one.
    pub q: Option<CondKernel>,
    /// Distortion multiplier of a dual-program solve, bits per unit
    /// distortion.
    pub multiplier: Option<f64>,
}

/// `I(V2;S2) - I(V2;S1)` for `p(s1,s2) w(v2|s2)`.
pub fn r_w(ch: &ChannelInstance, w: &CondKernel) -> Result<f64> {
    let joint = chain_w(ch, w)?;
    let a = joint.mutual_information(&[2], &[1], &[])?;
    let b = joint.mutual_information(&[2], &[0], &[])?;
    let direct = joint.mutual_information(&[2], &[1], &[0])?;
    let value = a - b;
    debug_assert!((value - direct).abs() < 1e-10, "{value} vs {direct}");
    Ok(value)
}

fn chain_w(ch: &ChannelInstance, w: &CondKernel) -> Result<JointPmf> {
    match w.given_axes() {
        [g] if g.size() == ch.s2.size() => {}
        _ => return arg("w must be conditioned on S2 alone"),
    }
    ch.state_joint.chain(w, &[1])
}

/// Precomputed data of the inner problem for a fixed `w(v2|s2)`.
///
/// Layouts: `q[(s1 * nv2 + v2) * nt + t]`,
/// `Q[((y * ns2 + s2) * nv2 + v2) * nt + t]`,
/// `lifted[(((t * ns1 + s1) * ns2 + s2) * nv2 + v2) * ny + y]`.
pub struct Case2Inner {
    pub ns1: usize,
    pub ns2: usize,
    pub nv2: usize,
    pub nt: usize,
    pub ny: usize,
    p_ssv: Vec<f64>,
    p_sv: Vec<f64>,
    p_s2_given: Vec<f64>,
    lifted: Vec<f64>,
    strategies: StrategySpace,
    v2: Alphabet,
    s1: Alphabet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerReport {
    /// `J_w` at the returned pair, bits.
    pub value: f64,
    /// `U_w - J_w`, bits.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub q: Vec<f64>,
    pub big_q: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

impl Case2Inner {
    pub fn new(ch: &ChannelInstance, w: &CondKernel) -> Result<Self> {
        let joint = chain_w(ch, w)?;
        let v2 = w.out_axes()[0].clone();
        let (ns1, ns2, nv2) = (ch.s1.size(), ch.s2.size(), v2.size());
        let strategies = enumerate_strategies(&[ch.s1.clone(), v2.clone()], &ch.x)?;
        let lifted = lift_channel(ch, &strategies)?.probs().to_vec();
        let p_ssv = joint.probs().to_vec();
        let mut p_sv = vec![0.0; ns1 * nv2];
        for s1 in 0..ns1 {
            for s2 in 0..ns2 {
                for v in 0..nv2 {
                    p_sv[s1 * nv2 + v] += p_ssv[(s1 * ns2 + s2) * nv2 + v];
                }
            }
        }
        let mut p_s2_given = vec![0.0; ns1 * ns2 * nv2];
        for s1 in 0..ns1 {
            for s2 in 0..ns2 {
                for v in 0..nv2 {
                    let m = p_sv[s1 * nv2 + v];
                    if m > 0.0 {
                        p_s2_given[(s1 * ns2 + s2) * nv2 + v] = p_ssv[(s1 * ns2 + s2) * nv2 + v] / m;
                    }
                }
            }
        }
        Ok(Self {
            ns1,
            ns2,
            nv2,
            nt: strategies.len(),
            ny: ch.y.size(),
            p_ssv,
            p_sv,
            p_s2_given,
            lifted,
            strategies,
            v2,
            s1: ch.s1.clone(),
        })
    }

    pub fn strategies(&self) -> &StrategySpace {
        &self.strategies
    }

    #[inline]
    fn l(&self, y: usize, t: usize, s1: usize, s2: usize, v: usize) -> f64 {
        self.lifted[(((t * self.ns1 + s1) * self.ns2 + s2) * self.nv2 + v) * self.ny + y]
    }

    #[inline]
    fn qi(&self, s1: usize, v: usize, t: usize) -> usize {
        (s1 * self.nv2 + v) * self.nt + t
    }

    #[inline]
    fn bqi(&self, y: usize, s2: usize, v: usize, t: usize) -> usize {
        ((y * self.ns2 + s2) * self.nv2 + v) * self.nt + t
    }

    pub fn uniform_q(&self) -> Vec<f64> {
        vec![1.0 / self.nt as f64; self.ns1 * self.nv2 * self.nt]
    }

    pub fn uniform_big_q(&self) -> Vec<f64> {
        vec![1.0 / self.nt as f64; self.ny * self.ns2 * self.nv2 * self.nt]
    }

    /// `J_w(q, Q)` in bits.
    pub fn j_w(&self, q: &[f64], big_q: &[f64]) -> f64 {
        let mut total = 0.0;
        for s1 in 0..self.ns1 {
            for s2 in 0..self.ns2 {
                for v in 0..self.nv2 {
                    let p = self.p_ssv[(s1 * self.ns2 + s2) * self.nv2 + v];
                    if p <= 0.0 {
                        continue;
                    }
                    for t in 0..self.nt {
                        let qt = q[self.qi(s1, v, t)];
                        if qt <= 0.0 {
                            continue;
                        }
                        for y in 0..self.ny {
                            let l = self.l(y, t, s1, s2, v);
                            if l > 0.0 {
                                total += p * qt * l * (big_q[self.bqi(y, s2, v, t)] / qt).ln();
                            }
                        }
                    }
                }
            }
        }
        total / LN_2
    }

    /// Maximizer of `J_w(q, Q)` over `Q` for fixed `q`.
    pub fn big_q_star(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ny * self.ns2 * self.nv2 * self.nt];
        for y in 0..self.ny {
            for s2 in 0..self.ns2 {
                for v in 0..self.nv2 {
                    let base = self.bqi(y, s2, v, 0);
                    for t in 0..self.nt {
                        out[base + t] = (0..self.ns1)
                            .map(|s1| {
                                self.p_ssv[(s1 * self.ns2 + s2) * self.nv2 + v]
                                    * q[self.qi(s1, v, t)]
                                    * self.l(y, t, s1, s2, v)
                            })
                            .sum();
                    }
                    let z: f64 = out[base..base + self.nt].iter().sum();
                    let slice = &mut out[base..base + self.nt];
                    if z > 0.0 {
                        slice.iter_mut().for_each(|x| *x /= z);
                    } else {
                        slice.iter_mut().for_each(|x| *x = 1.0 / self.nt as f64);
                    }
                }
            }
        }
        out
    }

    /// Maximizer of `J_w(q, Q)` over `q` for fixed `Q`.
    pub fn q_star(&self, big_q: &[f64]) -> Vec<f64> {
        let mut out = self.uniform_q();
        let mut logits = vec![0.0; self.nt];
        for s1 in 0..self.ns1 {
            for v in 0..self.nv2 {
                if self.p_sv[s1 * self.nv2 + v] <= 0.0 {
                    continue;
                }
                for (t, logit) in logits.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for s2 in 0..self.ns2 {
                        let ps = self.p_s2_given[(s1 * self.ns2 + s2) * self.nv2 + v];
                        if ps <= 0.0 {
                            continue;
                        }
                        for y in 0..self.ny {
                            let l = self.l(y, t, s1, s2, v);
                            if l > 0.0 {
                                acc += ps * l * big_q[self.bqi(y, s2, v, t)].ln();
                            }
                        }
                    }
                    *logit = acc;
                }
                let z = log_sum_exp(logits.iter().copied());
                for t in 0..self.nt {
                    out[self.qi(s1, v, t)] = (logits[t] - z).exp();
                }
            }
        }
        out
    }

    /// Per-strategy scores `sum_{s2,y} p(s2|s1,v) l ln(Q / q)` in nats,
    /// laid out like `q`. Rows with zero mass are left at zero.
    pub fn scores(&self, q: &[f64], big_q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; q.len()];
        for s1 in 0..self.ns1 {
            for v in 0..self.nv2 {
                if self.p_sv[s1 * self.nv2 + v] <= 0.0 {
                    continue;
                }
                for t in 0..self.nt {
                    let lq = q[self.qi(s1, v, t)].ln();
                    let mut acc = 0.0;
                    for s2 in 0..self.ns2 {
                        let ps = self.p_s2_given[(s1 * self.ns2 + s2) * self.nv2 + v];
                        if ps <= 0.0 {
                            continue;
                        }
                        for y in 0..self.ny {
                            let l = self.l(y, t, s1, s2, v);
                            if l > 0.0 {
                                acc += ps * l * (big_q[self.bqi(y, s2, v, t)].ln() - lq);
                            }
                        }
                    }
                    out[self.qi(s1, v, t)] = acc;
                }
            }
        }
        out
    }

    /// Upper bound `U_w(q)` on the inner optimum, bits. `big_q` must be
    /// `Q*(q)`.
    pub fn u_w(&self, q: &[f64], big_q: &[f64]) -> f64 {
        let scores = self.scores(q, big_q);
        let mut total = 0.0;
        for (row, chunk) in scores.chunks(self.nt).enumerate() {
            let m = self.p_sv[row];
            if m > 0.0 {
                total += m * chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        total / LN_2
    }

    /// `ln Q*(q)` from `ln q`, by log-sum-exp so vanishing strategies keep
    /// their relative weights.
    fn log_big_q_star(&self, lq: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ny * self.ns2 * self.nv2 * self.nt];
        for y in 0..self.ny {
            for s2 in 0..self.ns2 {
                for v in 0..self.nv2 {
                    let base = self.bqi(y, s2, v, 0);
                    for t in 0..self.nt {
                        out[base + t] = log_sum_exp((0..self.ns1).map(|s1| {
                            let p = self.p_ssv[(s1 * self.ns2 + s2) * self.nv2 + v];
                            let l = self.l(y, t, s1, s2, v);
                            if p > 0.0 && l > 0.0 {
                                p.ln() + lq[self.qi(s1, v, t)] + l.ln()
                            } else {
                                f64::NEG_INFINITY
                            }
                        }));
                    }
                    let slice = &mut out[base..base + self.nt];
                    let z = log_sum_exp(slice.iter().copied());
                    if z.is_finite() {
                        slice.iter_mut().for_each(|x| *x -= z);
                    } else {
                        slice.iter_mut().for_each(|x| *x = -(self.nt as f64).ln());
                    }
                }
            }
        }
        out
    }

    /// `ln q*(Q)` from `ln Q`.
    fn log_q_star(&self, lbq: &[f64]) -> Vec<f64> {
        let mut out = vec![-(self.nt as f64).ln(); self.ns1 * self.nv2 * self.nt];
        for s1 in 0..self.ns1 {
            for v in 0..self.nv2 {
                if self.p_sv[s1 * self.nv2 + v] <= 0.0 {
                    continue;
                }
                let row = self.qi(s1, v, 0)..self.qi(s1, v, 0) + self.nt;
                for t in 0..self.nt {
                    out[row.start + t] = self.expected_log(lbq, s1, v, t);
                }
                let z = log_sum_exp(out[row.clone()].iter().copied());
                out[row].iter_mut().for_each(|x| *x -= z);
            }
        }
        out
    }

    /// `sum_{s2,y} p(s2|s1,v) l ln Q`, nats.
    fn expected_log(&self, lbq: &[f64], s1: usize, v: usize, t: usize) -> f64 {
        let mut acc = 0.0;
        for s2 in 0..self.ns2 {
            let ps = self.p_s2_given[(s1 * self.ns2 + s2) * self.nv2 + v];
            if ps <= 0.0 {
                continue;
            }
            for y in 0..self.ny {
                let l = self.l(y, t, s1, s2, v);
                if l > 0.0 {
                    acc += ps * l * lbq[self.bqi(y, s2, v, t)];
                }
            }
        }
        acc
    }

    /// `(J_w, U_w)` at `q` and `Q*(q)` given in logs, bits.
    fn bracket_log(&self, lq: &[f64], lbq: &[f64]) -> (f64, f64) {
        let (mut j, mut u) = (0.0, 0.0);
        for s1 in 0..self.ns1 {
            for v in 0..self.nv2 {
                let m = self.p_sv[s1 * self.nv2 + v];
                if m <= 0.0 {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for t in 0..self.nt {
                    let l = lq[self.qi(s1, v, t)];
                    let score = self.expected_log(lbq, s1, v, t) - l;
                    best = best.max(score);
                    let q = l.exp();
                    if q > 0.0 {
                        j += m * q * score;
                    }
                }
                u += m * best;
            }
        }
        (j / LN_2, u / LN_2)
    }

    /// Alternates `q <- q*(Q)`, `Q <- Q*(q)` from uniform `Q` until
    /// `U_w(q) - J_w(q, Q) < delta`. Iterates live in the log domain and the
    /// composite map is accelerated by SQUAREM: each update is two plain
    /// steps, replaced by the stabilized extrapolation when that scores
    /// higher. `max_iters` caps map evaluations; the trace holds one entry per
    /// update.
    pub fn solve(&self, delta: f64, max_iters: usize) -> InnerReport {
        let step = |lq: &[f64]| self.log_q_star(&self.log_big_q_star(lq));
        let mut lq = self.log_q_star(&self.uniform_big_q().iter().map(|x| x.ln()).collect::<Vec<_>>());
        let mut lbq = self.log_big_q_star(&lq);
        let (mut j, mut u) = self.bracket_log(&lq, &lbq);
        let mut trace = vec![TracePoint { objective: j, bound: u }];
        let mut iterations = 1;
        let mut converged = u - j < delta;
        while !converged && iterations + 3 <= max_iters {
            let l1 = step(&lq);
            let l2 = step(&l1);
            iterations += 2;
            let b2 = self.log_big_q_star(&l2);
            let (j2, u2) = self.bracket_log(&l2, &b2);
            let mut next = (l2, b2, j2, u2);
            if let Some(e) = squarem(&lq, &l1, &next.0, self.nt) {
                iterations += 1;
                let e = step(&e);
                let be = self.log_big_q_star(&e);
                let (je, ue) = self.bracket_log(&e, &be);
                if je >= next.2 {
                    next = (e, be, je, ue);
                }
            }
            (lq, lbq, j, u) = next;
            trace.push(TracePoint { objective: j, bound: u });
            converged = u - j < delta;
        }
        let q = lq.iter().map(|l| l.exp()).collect();
        let big_q = lbq.iter().map(|l| l.exp()).collect();
        InnerReport { value: j, gap: (u - j).max(0.0), iterations, converged, q, big_q, trace }
    }

    /// `q(t|s1,v2)` as a kernel over the strategy alphabet.
    pub fn q_kernel(&self, q: &[f64]) -> CondKernel {
        CondKernel::from_rows_unchecked(
            vec![self.s1.clone(), self.v2.clone()],
            vec![self.strategies.alphabet("T")],
            q.to_vec(),
        )
    }
}

/// Inner value `C^lb_{2,w}` for one kernel.
pub fn inner_max(ch: &ChannelInstance, w: &CondKernel, opts: &Case2Options) -> Result<InnerReport> {
    opts.check()?;
    Ok(Case2Inner::new(ch, w)?.solve(opts.delta, opts.max_inner_iters))
}

/// Causal inner value: `sum_v2 p(v2) C(v2)` where `C(v2)` is the capacity
/// from strategies `S1 -> X` to `(Y, S2)` given `V2 = v2`. Returns the value,
/// summed gap, iterations, convergence, and `p(u|v2)`.
pub fn inner_causal(ch: &ChannelInstance, w: &CondKernel, opts: &Case2Options) -> Result<InnerReport> {
    opts.check()?;
    let joint = chain_w(ch, w)?;
    let nv2 = w.out_len();
    let (ns1, ns2, ny) = (ch.s1.size(), ch.s2.size(), ch.y.size());
    let sp = enumerate_strategies(std::slice::from_ref(&ch.s1), &ch.x)?;
    let nu = sp.len();
    let pv = joint.marginalize(&[2])?.probs().to_vec();
    let ba_opts = SolveOptions { delta: opts.delta, max_iters: opts.max_inner_iters };
    let mut rows = vec![1.0 / nu as f64; nv2 * nu];
    let (mut value, mut gap, mut iterations, mut converged) = (0.0, 0.0, 0, true);
    for v in 0..nv2 {
        if pv[v] <= 0.0 {
            continue;
        }
        let mut k = vec![0.0; nu * ny * ns2];
        for u in 0..nu {
            for s1 in 0..ns1 {
                let x = sp.apply(u, s1);
                for s2 in 0..ns2 {
                    let ps = joint.probs()[(s1 * ns2 + s2) * nv2 + v] / pv[v];
                    for y in 0..ny {
                        k[(u * ny + y) * ns2 + s2] += ps * ch.p_y(y, x, s1, s2);
                    }
                }
            }
        }
        let kernel = CondKernel::from_rows_unchecked(vec![sp.alphabet("U")], vec![Alphabet::new("YS2", ny * ns2)?], k);
        let r = ba_capacity(&kernel, &ba_opts)?;
        value += pv[v] * r.value;
        gap += pv[v] * r.gap;
        iterations += r.iterations;
        converged &= r.converged;
        rows[v * nu..(v + 1) * nu].copy_from_slice(r.argopt[0].probs());
    }
    Ok(InnerReport { value, gap, iterations, converged, q: rows, big_q: Vec::new(), trace: Vec::new() })
}

/// Joint over `(S1, S2, V, U, X, Y)` realized by `w(v|s2)` and a strategy
/// law `q(u|s1,v)` over the strategies `(S1, V) -> X`, with `X = u(s1, v)`.
pub fn case2_joint(ch: &ChannelInstance, w: &CondKernel, q: &CondKernel) -> Result<JointPmf> {
    let v = w.out_axes()[0].clone();
    let sp = enumerate_strategies(&[ch.s1.clone(), v.clone()], &ch.x)?;
    if q.given_len() != ch.s1.size() * v.size() || q.out_len() != sp.len() {
        return arg("strategy law must be conditioned on (S1, V) over all strategies (S1, V) -> X");
    }
    let nv = v.size();
    JointPmf::from_fn(vec![ch.s1.clone(), ch.s2.clone(), v, sp.alphabet("U"), ch.x.clone(), ch.y.clone()], |i| {
        let (s1, s2, vv, u, x, y) = (i[0], i[1], i[2], i[3], i[4], i[5]);
        if sp.apply(u, s1 * nv + vv) != x {
            return 0.0;
        }
        ch.p_s(s1, s2) * w.get(s2, vv) * q.get(s1 * nv + vv, u) * ch.p_y(y, x, s1, s2)
    })
}

/// Causal counterpart of [`case2_joint`]: `q(u|v)` over strategies
/// `S1 -> X`, with `X = u(s1)`.
pub fn case2_causal_joint(ch: &ChannelInstance, w: &CondKernel, q: &CondKernel) -> Result<JointPmf> {
    let v = w.out_axes()[0].clone();
    let sp = enumerate_strategies(std::slice::from_ref(&ch.s1), &ch.x)?;
    if q.given_len() != v.size() || q.out_len() != sp.len() {
        return arg("strategy law must be conditioned on V over all strategies S1 -> X");
    }
    JointPmf::from_fn(vec![ch.s1.clone(), ch.s2.clone(), v, sp.alphabet("U"), ch.x.clone(), ch.y.clone()], |i| {
        let (s1, s2, vv, u, x, y) = (i[0], i[1], i[2], i[3], i[4], i[5]);
        if sp.apply(u, s1) != x {
            return 0.0;
        }
        ch.p_s(s1, s2) * w.get(s2, vv) * q.get(vv, u) * ch.p_y(y, x, s1, s2)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    NonCausal,
    Causal,
}

/// Grid with cached inner solves, shared by every `R'` of a sweep.
struct GridSweep<'a> {
    ch: &'a ChannelInstance,
    variant: Variant,
    opts: Case2Options,
    step: f64,
    grid: SimplexGrid,
    rates: Vec<f64>,
    epsilon: f64,
    cache: HashMap<usize, InnerReport>,
}

impl<'a> GridSweep<'a> {
    fn new(ch: &'a ChannelInstance, variant: Variant, opts: Case2Options, step: f64) -> Result<Self> {
        let v2 = Alphabet::new("V2", opts.v2_size)?;
        let grid = simplex_grid(&ch.s2, &v2, step)?;
        let rates = par::map(&grid.points, |w| match variant {
            Variant::NonCausal => r_w(ch, w),
            Variant::Causal => chain_w(ch, w).and_then(|j| j.mutual_information(&[2], &[1], &[])),
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let epsilon = match opts.epsilon {
            Some(e) => e,
            None => {
                let mut sorted = rates.clone();
                sorted.sort_by(f64::total_cmp);
                let spacing = sorted.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
                spacing.max(0.02)
            }
        };
        Ok(Self { ch, variant, opts, step, grid, rates, epsilon, cache: HashMap::new() })
    }

    fn feasible(&self, r_prime: f64) -> Vec<usize> {
        (0..self.rates.len())
            .filter(|&i| self.rates[i] >= r_prime - self.epsilon && self.rates[i] <= r_prime + BAND_TOL)
            .collect()
    }

    fn fill(&mut self, needed: &[usize]) -> Result<()> {
        let missing: Vec<usize> = needed.iter().copied().filter(|i| !self.cache.contains_key(i)).collect();
        let (ch, variant, opts, grid) = (self.ch, self.variant, &self.opts, &self.grid);
        let solved = par::map(&missing, |&i| match variant {
            Variant::NonCausal => inner_max(ch, &grid.points[i], opts),
            Variant::Causal => inner_causal(ch, &grid.points[i], opts),
        });
        for (i, r) in missing.into_iter().zip(solved) {
            self.cache.insert(i, r?);
        }
        Ok(())
    }

    fn point(&mut self, r_prime: f64, r_used: f64) -> Result<Option<CurvePoint>> {
        let feasible = self.feasible(r_used);
        if feasible.is_empty() {
            return Ok(None);
        }
        self.fill(&feasible)?;
        let best = feasible.iter().map(|i| self.cache[i].value).fold(f64::NEG_INFINITY, f64::max);
        let win = *feasible.iter().find(|i| self.cache[i].value >= best - TIE_TOL).expect("nonempty");
        let rep = &self.cache[&win];
        let w = self.grid.points[win].clone();
        let q = match self.variant {
            Variant::NonCausal => Case2Inner::new(self.ch, &w)?.q_kernel(&rep.q),
            Variant::Causal => {
                let nu = rep.q.len() / self.opts.v2_size;
                CondKernel::from_rows_unchecked(
                    vec![w.out_axes()[0].clone()],
                    vec![Alphabet::new("U", nu)?],
                    rep.q.clone(),
                )
            }
        };
        Ok(Some(CurvePoint {
            r_prime,
            r_prime_used: r_used,
            value: rep.value,
            raw_value: rep.value,
            winning_w: Some(win),
            r_w: Some(self.rates[win]),
            iterations: rep.iterations,
            gap: rep.gap,
            status: if rep.converged { PointStatus::Ok } else { PointStatus::InnerNonconverged },
            epsilon: self.epsilon,
            grid_step: self.step,
            w: Some(w),
            q: Some(q),
            multiplier: None,
        }))
    }
}

fn sweep_curve(
    ch: &ChannelInstance,
    variant: Variant,
    r_primes: &[f64],
    opts: &Case2Options,
) -> Result<Vec<CurvePoint>> {
    opts.check()?;
    if r_primes.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return arg("R' values must be finite and nonnegative");
    }
    let rmax = match variant {
        Variant::NonCausal => ch.state_joint.entropy() - ch.state_joint.marginalize(&[0])?.entropy(),
        Variant::Causal => ch.state_joint.marginalize(&[1])?.entropy(),
    };
    let mut base = GridSweep::new(ch, variant, *opts, opts.grid_step)?;
    let mut refined: Option<GridSweep> = None;
    let mut out = Vec::with_capacity(r_primes.len());
    for &r in r_primes {
        let used = r.min(rmax);
        let mut pt = base.point(r, used)?;
        if pt.is_none() {
            if refined.is_none() {
                refined = Some(GridSweep::new(ch, variant, *opts, opts.grid_step / 2.0)?);
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
    running_max(&mut out);
    Ok(out)
}

/// Replaces each value by the maximum over all points with a smaller or
/// equal `R'`. Raw values are kept.
fn running_max(points: &mut [CurvePoint]) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].r_prime.total_cmp(&points[b].r_prime));
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if points[i].raw_value.is_finite() {
            best = best.max(points[i].raw_value);
            points[i].value = best;
        }
    }
}

/// Lower bound `C2^lb(R')` on the Case-2 capacity.
pub fn capacity_case2(ch: &ChannelInstance, r_prime: f64, opts: &Case2Options) -> Result<CurvePoint> {
    Ok(sweep_curve(ch, Variant::NonCausal, &[r_prime], opts)?.remove(0))
}

/// `C2^lb` over several rates, sharing inner solves; values are made
/// nondecreasing in `R'`.
pub fn capacity_case2_curve(ch: &ChannelInstance, r_primes: &[f64], opts: &Case2Options) -> Result<Vec<CurvePoint>> {
    sweep_curve(ch, Variant::NonCausal, r_primes, opts)
}

/// Capacity of the causal variant at rate `R'`.
pub fn capacity_case2_causal(ch: &ChannelInstance, r_prime: f64, opts: &Case2Options) -> Result<CurvePoint> {
    Ok(sweep_curve(ch, Variant::Causal, &[r_prime], opts)?.remove(0))
}

pub fn capacity_case2_causal_curve(
    ch: &ChannelInstance,
    r_primes: &[f64],
    opts: &Case2Options,
) -> Result<Vec<CurvePoint>> {
    sweep_curve(ch, Variant::Causal, r_primes, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ba::{gp_channel_capacity, StrategyChannel};
    use crate::instance::example1;
    use crate::prob::binary_entropy;

    fn ab(label: &str, n: usize) -> Alphabet {
        Alphabet::new(label, n).unwrap()
    }

    fn w_from(rows: &[f64]) -> CondKernel {
        CondKernel::new(vec![ab("S2", 2)], vec![ab("V2", 2)], rows.to_vec()).unwrap()
    }

    #[test]
    fn r_w_examples() {
        let ch = example1(0.1).unwrap();
        assert!(r_w(&ch, &w_from(&[1.0, 0.0, 1.0, 0.0])).unwrap().abs() < 1e-12);
        let copy = r_w(&ch, &w_from(&[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((copy - binary_entropy(0.2)).abs() < 1e-12);
        assert!((copy - 0.7219).abs() < 5e-5);
        let w = w_from(&[0.75, 0.25, 0.25, 0.75]);
        let direct = ch.state_joint.chain(&w, &[1]).unwrap().mutual_information(&[2], &[1], &[0]).unwrap();
        assert!((r_w(&ch, &w).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn inner_matches_oracles() {
        let ch = example1(0.1).unwrap();
        let opts = Case2Options { delta: 1e-8, max_inner_iters: 200_000, ..Default::default() };
        let oracle_opts = SolveOptions { delta: 1e-8, max_iters: 200_000 };
        let cover = gp_channel_capacity(&StrategyChannel::from_channel(&ch, false).unwrap(), &oracle_opts).unwrap();
        let r = inner_max(&ch, &w_from(&[1.0, 0.0, 1.0, 0.0]), &opts).unwrap();
        assert!(r.converged);
        assert!((r.value - cover.value).abs() < 1e-6, "{} vs {}", r.value, cover.value);
        let full = gp_channel_capacity(&StrategyChannel::from_channel(&ch, true).unwrap(), &oracle_opts).unwrap();
        let r = inner_max(&ch, &w_from(&[1.0, 0.0, 0.0, 1.0]), &opts).unwrap();
        assert!((r.value - full.value).abs() < 1e-6, "{} vs {}", r.value, full.value);
    }

    #[test]
    fn inner_ignoring_states_is_plain_capacity() {
        let states = JointPmf::new(vec![ab("S1", 2), ab("S2", 2)], vec![0.3, 0.2, 0.1, 0.4]).unwrap();
        let kernel = CondKernel::from_fn(vec![ab("X", 2), ab("S1", 2), ab("S2", 2)], vec![ab("Y", 2)], |g, o| {
            if g[0] == o[0] {
                0.9
            } else {
                0.1
            }
        })
        .unwrap();
        let ch = ChannelInstance::new(states, kernel).unwrap();
        let opts = Case2Options { delta: 1e-9, max_inner_iters: 100_000, ..Default::default() };
        let r = inner_max(&ch, &w_from(&[0.0, 1.0, 0.0, 1.0]), &opts).unwrap();
        assert!((r.value - (1.0 - binary_entropy(0.1))).abs() < 1e-8);
        for t in r.trace.windows(2) {
            assert!(t[1].objective >= t[0].objective - 1e-12);
        }
        let c = inner_causal(&ch, &w_from(&[0.0, 1.0, 0.0, 1.0]), &opts).unwrap();
        assert!((c.value - (1.0 - binary_entropy(0.1))).abs() < 1e-8);
    }

    #[test]
    fn u_w_examples() {
        let ch = example1(0.1).unwrap();
        let inner = Case2Inner::new(&ch, &w_from(&[0.7, 0.3, 0.2, 0.8])).unwrap();
        let q = inner.uniform_q();
        let q = inner.q_star(&inner.big_q_star(&q));
        let bq = inner.big_q_star(&q);
        assert!(inner.u_w(&q, &bq) > inner.j_w(&q, &bq));
        let r = inner.solve(1e-10, 500_000);
        assert!(r.gap < 1e-9 && r.converged);

        let one =
            CondKernel::deterministic(vec![ab("X", 1), ab("S1", 2), ab("S2", 2)], vec![ab("Y", 2)], |g| g[1]).unwrap();
        let ch1 = ChannelInstance::new(ch.state_joint.clone(), one).unwrap();
        let inner = Case2Inner::new(&ch1, &w_from(&[0.5, 0.5, 0.1, 0.9])).unwrap();
        assert_eq!(inner.nt, 1);
        let q = inner.uniform_q();
        let bq = inner.big_q_star(&q);
        assert_eq!(inner.u_w(&q, &bq), 0.0);
        assert_eq!(inner.j_w(&q, &bq), 0.0);
    }

    #[test]
    fn noiseless_causal_is_one_bit() {
        let states = JointPmf::new(vec![ab("S1", 2), ab("S2", 2)], vec![0.1, 0.4, 0.4, 0.1]).unwrap();
        let kernel =
            CondKernel::deterministic(vec![ab("X", 2), ab("S1", 2), ab("S2", 2)], vec![ab("Y", 2)], |g| g[0]).unwrap();
        let ch = ChannelInstance::new(states, kernel).unwrap();
        let opts = Case2Options { grid_step: 0.25, ..Default::default() };
        for r in [0.0, 0.3, 2.0] {
            let p = capacity_case2_causal(&ch, r, &opts).unwrap();
            assert!((p.value - 1.0).abs() < 1e-6, "{r}: {}", p.value);
        }
    }

    #[test]
    fn clamping_and_ties() {
        let ch = example1(0.1).unwrap();
        let opts = Case2Options { grid_step: 0.25, ..Default::default() };
        let pts = capacity_case2_curve(&ch, &[0.0, binary_entropy(0.2), 1.0, 5.0], &opts).unwrap();
        assert_eq!(pts[1].raw_value, pts[2].raw_value);
        assert_eq!(pts[2].raw_value, pts[3].raw_value);
        assert_eq!(pts[2].winning_w, pts[3].winning_w);
        assert!(pts.iter().all(|p| p.status == PointStatus::Ok));
        // Constant kernels tie at R' = 0; the first grid index wins.
        assert_eq!(pts[0].winning_w, Some(0));
        for p in &pts {
            let r = p.r_w.unwrap();
            assert!(r <= p.r_prime_used + BAND_TOL && r >= p.r_prime_used - p.epsilon);
        }
    }

    #[test]
    fn explicit_narrow_band_refines_or_fails() {
        let ch = example1(0.1).unwrap();
        let opts = Case2Options { grid_step: 0.5, epsilon: Some(1e-6), ..Default::default() };
        let p = capacity_case2(&ch, 0.5, &opts).unwrap();
        assert_eq!(p.status, PointStatus::NoFeasibleW);
        assert!(p.value.is_nan());
    }
}
