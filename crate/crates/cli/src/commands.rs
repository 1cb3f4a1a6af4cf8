use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use sideinfo_core::ba::{wz_primal, SolveOptions};
use sideinfo_core::case2::{capacity_case2_causal_curve, capacity_case2_curve, Case2Options, CurvePoint, PointStatus};
use sideinfo_core::gp::{rd_case1_curve, wz_rate_via_gp, Case1Options, GpOptions};
use sideinfo_core::theory::{descriptor, dualize, eval_cc, eval_fact, eval_sc, CcCase, FactId, ScCase};
use sideinfo_core::{Alphabet, Case, JointPmf, SourceInstance};

use crate::problem::{self, reorder, Problem, ProblemFile};

#[derive(Debug, Parser)]
#[command(name = "sideinfo", version, about = "Capacity and rate-distortion with rate-limited side information")]
pub struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity curve with a rate-limited description of the decoder's state.
    CapacityCase2(CapacityArgs),
    /// Same, with causal encoder state.
    CapacityCase2c(CapacityArgs),
    /// Wyner-Ziv rate of the (X, S1) pair with S2 at the decoder.
    WzRate(WzArgs),
    /// Rate-distortion curve with a rate-limited description of S1.
    RdCase1(RdArgs),
    /// Evaluate a single-letter functional on an explicit joint.
    Eval(EvalArgs),
    /// Print the dual of a coding problem.
    Dualize(DualizeArgs),
    /// Print a problem as an explicit problem file.
    Export(ExportArgs),
}

/// Inclusive rate grid written `start:stop:step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad grid {s:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let [a, b, step] = parts[..] else {
            return Err(format!("grid {s:?} must be start:stop:step"));
        };
        if !(a.is_finite() && b.is_finite() && b >= a && a >= 0.0) {
            return Err(format!("grid {s:?} needs 0 <= start <= stop"));
        }
        if b == a {
            return Ok(Grid(vec![a]));
        }
        if !(step > 0.0) {
            return Err(format!("grid {s:?} needs a positive step"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        Ok(Grid((0..=n).map(|i| a + i as f64 * step).collect()))
    }
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    /// `builtin:example1` or a problem file.
    #[arg(long)]
    pub problem: String,
    #[arg(long, default_value = "0:1:0.05")]
    pub rprime_grid: Grid,
    #[arg(long, default_value_t = 0.05)]
    pub grid_step: f64,
    #[arg(long = "v2", default_value_t = 2)]
    pub v2_size: usize,
    /// Feasibility band below R', bits (default: from the grid spacing).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_inner: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Via {
    Ba,
    Gp,
    Both,
}

#[derive(Debug, Args)]
pub struct WzArgs {
    #[arg(long)]
    pub problem: String,
    #[arg(long, conflicts_with = "d")]
    pub d_grid: Option<Grid>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long, value_enum, default_value_t = Via::Ba)]
    pub via: Via,
    /// Largest tolerated disagreement between the two solvers, bits.
    #[arg(long, default_value_t = 1e-3)]
    pub tight_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct RdArgs {
    #[arg(long)]
    pub problem: String,
    #[arg(long)]
    pub d: f64,
    #[arg(long, conflicts_with = "rprime_grid")]
    pub rprime: Option<f64>,
    #[arg(long)]
    pub rprime_grid: Option<Grid>,
    #[arg(long, default_value_t = 0.05)]
    pub grid_step: f64,
    #[arg(long = "v1", default_value_t = 2)]
    pub v1_size: usize,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// cc1, cc2lb, cc2ub1, cc2ub2, cc2c, sc1, sc1c, sc2, fact1 or fact2.
    #[arg(long)]
    pub case: String,
    /// JSON file with `axes`, `probs` and, for source cases, `distortion`.
    #[arg(long)]
    pub joint: PathBuf,
}

#[derive(Debug, Args)]
pub struct DualizeArgs {
    #[arg(long)]
    pub case: Case,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub problem: String,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad input; exit code 2.
    Usage(String),
    /// Solver error or an unconverged result; exit code 3. Whatever output
    /// was produced is still written.
    Solver { message: String, output: String },
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Solver { .. } => 3,
        }
    }
}

/// Runs a command and writes its output; returns the process exit code.
pub fn execute(cli: Cli) -> u8 {
    let (output, failure) = match run(&cli.command) {
        Ok(out) => (Some(out), None),
        Err(Failure::Solver { message, output }) => (Some(output), Some((3, message))),
        Err(Failure::Usage(message)) => (None, Some((2, message))),
    };
    if let Some(out) = output {
        let written = match &cli.out {
            Some(path) => fs::write(path, &out).map_err(|e| format!("cannot write {}: {e}", path.display())),
            None => {
                print!("{out}");
                Ok(())
            }
        };
        if let Err(e) = written {
            eprintln!("error: {e}");
            return 2;
        }
    }
    match failure {
        Some((code, message)) => {
            eprintln!("error: {message}");
            code
        }
        None => 0,
    }
}

pub fn run(cmd: &Command) -> Result<String, Failure> {
    match cmd {
        Command::CapacityCase2(a) => capacity(a, false),
        Command::CapacityCase2c(a) => capacity(a, true),
        Command::WzRate(a) => wz_rate(a),
        Command::RdCase1(a) => rd_case1(a),
        Command::Eval(a) => eval(a),
        Command::Dualize(a) => json(&dualize(&descriptor(a.case))),
        Command::Export(a) => json(&ProblemFile::from_problem(&problem::load(&a.problem).map_err(Failure::Usage)?)),
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Six decimals, no negative zero, `nan` for non-finite values.
pub fn fmt6(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    fn row(&mut self, fields: &[String]) {
        self.w.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

const CURVE_HEADER: [&str; 7] = ["r_prime", "value", "raw_value", "winning_w", "iterations", "gap", "status"];

/// Curve header, with the distortion multiplier appended for the dual-program solves.
fn curve_header(multiplier: bool) -> Vec<&'static str> {
    let mut h = CURVE_HEADER.to_vec();
    if multiplier {
        h.push("multiplier");
    }
    h
}

fn curve_csv(points: &[CurvePoint], multiplier: bool) -> String {
    let mut t = Table::new(&curve_header(multiplier));
    for p in points {
        let mut row = vec![
            fmt6(p.r_prime),
            fmt6(p.value),
            fmt6(p.raw_value),
            p.winning_w.map(|w| w.to_string()).unwrap_or_default(),
            p.iterations.to_string(),
            fmt6(p.gap),
            p.status.as_str().into(),
        ];
        if multiplier {
            row.push(fmt_opt(p.multiplier));
        }
        t.row(&row);
    }
    t.finish()
}

fn curve_result(points: Vec<CurvePoint>, multiplier: bool) -> Result<String, Failure> {
    let output = curve_csv(&points, multiplier);
    let bad: Vec<String> = points
        .iter()
        .filter(|p| p.status != PointStatus::Ok)
        .map(|p| format!("R'={} {}", fmt6(p.r_prime), p.status.as_str()))
        .collect();
    if bad.is_empty() {
        Ok(output)
    } else {
        Err(Failure::Solver { message: format!("unresolved points: {}", bad.join(", ")), output })
    }
}

fn solver_error(e: sideinfo_core::Error, output: String) -> Failure {
    match e {
        sideinfo_core::Error::Argument(m) => Failure::Usage(m),
        e => Failure::Solver { message: e.to_string(), output },
    }
}

fn capacity(a: &CapacityArgs, causal: bool) -> Result<String, Failure> {
    let Problem::Channel(ch) = problem::load(&a.problem).map_err(Failure::Usage)? else {
        return Err(Failure::Usage(format!("{} is a source, not a channel", a.problem)));
    };
    let opts = Case2Options {
        epsilon: a.epsilon,
        delta: a.delta,
        grid_step: a.grid_step,
        v2_size: a.v2_size,
        max_inner_iters: a.max_inner,
    };
    let points = if causal {
        capacity_case2_causal_curve(&ch, &a.rprime_grid.0, &opts)
    } else {
        capacity_case2_curve(&ch, &a.rprime_grid.0, &opts)
    };
    curve_result(points.map_err(|e| solver_error(e, Table::new(&CURVE_HEADER).finish()))?, false)
}

fn load_source(spec: &str) -> Result<SourceInstance, Failure> {
    match problem::load(spec).map_err(Failure::Usage)? {
        Problem::Source(s) => Ok(s),
        Problem::Channel(_) => Err(Failure::Usage(format!("{spec} is a channel, not a source"))),
    }
}

fn wz_rate(a: &WzArgs) -> Result<String, Failure> {
    let src = load_source(&a.problem)?.pair_source();
    let ds = match (&a.d_grid, a.d) {
        (Some(g), _) => g.0.clone(),
        (None, Some(d)) => vec![d],
        (None, None) => return Err(Failure::Usage("wz-rate needs --d or --d-grid".into())),
    };
    let primal_opts = SolveOptions { delta: a.delta, ..SolveOptions::default() };
    let gp_opts = GpOptions { tight_tol: a.tight_tol, ..GpOptions::default() };
    let header: &[&str] = match a.via {
        Via::Both => &["D", "primal", "gp", "gap"],
        _ => &["D", "value", "gap", "status"],
    };
    let mut t = Table::new(header);
    let mut bad = Vec::new();
    for &d in &ds {
        let step = (|| -> sideinfo_core::Result<Vec<String>> {
            Ok(match a.via {
                Via::Ba => {
                    let r = wz_primal(&src, d, &primal_opts)?;
                    let status = match (r.converged, r.below_floor) {
                        (false, _) => "nonconverged",
                        (true, true) => "below-floor",
                        (true, false) => "ok",
                    };
                    if !r.converged {
                        bad.push(format!("D={} {status}", fmt6(d)));
                    }
                    vec![fmt6(d), fmt6(r.value), fmt6(r.gap), status.into()]
                }
                Via::Gp => {
                    let r = wz_rate_via_gp(&src, d, &gp_opts)?;
                    let status = if r.gp.certified { "ok" } else { "uncertified" };
                    if !r.gp.certified {
                        bad.push(format!("D={} {status}", fmt6(d)));
                    }
                    vec![fmt6(d), fmt6(r.value), fmt6(r.gp.duality_measure), status.into()]
                }
                Via::Both => {
                    let p = wz_primal(&src, d, &primal_opts)?;
                    let g = wz_rate_via_gp(&src, d, &gp_opts)?;
                    let gap = (p.value - g.value).abs();
                    if !(gap <= a.tight_tol) || !p.converged || !g.gp.certified {
                        bad.push(format!("D={} disagreement {gap:.3e}", fmt6(d)));
                    }
                    vec![fmt6(d), fmt6(p.value), fmt6(g.value), fmt6(gap)]
                }
            })
        })();
        match step {
            Ok(row) => t.row(&row),
            Err(e) => return Err(solver_error(e, t.finish())),
        }
    }
    let output = t.finish();
    if bad.is_empty() {
        Ok(output)
    } else {
        Err(Failure::Solver { message: format!("unresolved points: {}", bad.join(", ")), output })
    }
}

fn rd_case1(a: &RdArgs) -> Result<String, Failure> {
    let src = load_source(&a.problem)?;
    let rates = match (&a.rprime_grid, a.rprime) {
        (Some(g), _) => g.0.clone(),
        (None, Some(r)) => vec![r],
        (None, None) => return Err(Failure::Usage("rd-case1 needs --rprime or --rprime-grid".into())),
    };
    let opts =
        Case1Options { grid_step: a.grid_step, v1_size: a.v1_size, epsilon: a.epsilon, gp: GpOptions::default() };
    let points = rd_case1_curve(&src, &rates, a.d, &opts)
        .map_err(|e| solver_error(e, Table::new(&curve_header(true)).finish()))?;
    curve_result(points, true)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointAxis {
    name: String,
    size: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    axes: Vec<JointAxis>,
    probs: Vec<f64>,
    #[serde(default)]
    distortion: Option<Vec<f64>>,
}

enum Functional {
    Cc(CcCase),
    Sc(ScCase),
    Fact(FactId),
}

const CC_AXES: [&str; 6] = ["S1", "S2", "V", "U", "X", "Y"];
const SC_AXES: [&str; 6] = ["X", "S1", "S2", "V", "U", "Xhat"];
const FACT1_AXES: [&str; 7] = ["S1", "S2", "V1", "V2", "U", "X", "Y"];
const FACT2_AXES: [&str; 7] = ["X", "S1", "S2", "V1", "V2", "U", "Xhat"];

fn functional(name: &str) -> Result<Functional, String> {
    let key = name.to_ascii_lowercase().replace(['-', '_'], "");
    let parsed = if let Some(r) = key.strip_prefix("cc") {
        r.parse().map(Functional::Cc)
    } else if let Some(r) = key.strip_prefix("sc") {
        r.parse().map(Functional::Sc)
    } else if let Some(r) = key.strip_prefix("fact") {
        r.parse().map(Functional::Fact)
    } else {
        return Err(format!("unknown case {name:?}"));
    };
    parsed.map_err(|e| e.to_string())
}

fn eval(a: &EvalArgs) -> Result<String, Failure> {
    let f = functional(&a.case).map_err(Failure::Usage)?;
    let text =
        fs::read_to_string(&a.joint).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.joint.display())))?;
    let file: JointFile =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("malformed joint file: {e}")))?;
    let target: &[&str] = match f {
        Functional::Cc(_) => &CC_AXES,
        Functional::Sc(_) => &SC_AXES,
        Functional::Fact(FactId::One) => &FACT1_AXES,
        Functional::Fact(FactId::Two) => &FACT2_AXES,
    };
    let size = |n: &str| Ok(file.axes.iter().find(|a| a.name == n).map_or(1, |a| a.size));
    let names: Vec<String> = file.axes.iter().map(|a| a.name.clone()).collect();
    let probs = reorder("joint", &names, &file.probs, target, size).map_err(Failure::Usage)?;
    let axes = target
        .iter()
        .map(|n| Alphabet::new(*n, size(n).expect("infallible")))
        .collect::<sideinfo_core::Result<Vec<_>>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let joint = JointPmf::new(axes, probs).map_err(|e| Failure::Usage(e.to_string()))?;
    let d = file.distortion.as_deref();
    let needs_d = !matches!(f, Functional::Cc(_) | Functional::Fact(FactId::One));
    if needs_d != d.is_some() {
        return Err(Failure::Usage(format!(
            "case {} {} a distortion table",
            a.case,
            if needs_d { "needs" } else { "takes no" }
        )));
    }
    let result = match f {
        Functional::Cc(c) => eval_cc(c, &joint),
        Functional::Sc(c) => eval_sc(c, &joint, d.expect("checked")),
        Functional::Fact(id) => eval_fact(id, &joint, d),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    json(&result)
}
