//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use certabs_core::abstraction::min_delta2_for_tau;
use certabs_core::labelling::{LabellingSpec, PropSet};
use certabs_core::logic::{check_continuous, check_discrete, parse_formula, Formula, Trace, Verdict};
use certabs_core::synthesis::{run_batch, sample_starts, RunReport, RunSettings, Strategy};
use certabs_core::system::{intersample_bound, Trajectory};
use certabs_core::Exec;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{hash_bytes, Problem};
use crate::pipeline::{build, decide, resolve_params, Overrides};

#[derive(Debug, Parser)]
#[command(name = "certabs", version, about = "Certified finite abstractions and controller synthesis for sampled-data systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Fixed sampling period; skips the period search.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// State grid width.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Control grid width.
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Simulation seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel loops (1 = sequential).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Choose and report discretization parameters.
    Params,
    /// Tabulate δ2_min and ε_min over log-spaced periods.
    Sweep {
        #[arg(long, default_value_t = 1e-3)]
        from: f64,
        #[arg(long, default_value_t = 0.2)]
        to: f64,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Build the abstraction and report its size.
    Abstract,
    /// Synthesize and write a strategy file.
    Synth,
    /// Run closed-loop simulations of a strategy.
    Simulate {
        /// Strategy file (default: <out>/strategy.json).
        #[arg(long)]
        strategy: Option<PathBuf>,
        /// Number of runs (default: simulation.runs).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Monitor a trace (JSON) or trajectory (CSV) against a formula.
    Check {
        #[arg(long, conflicts_with = "trajectory")]
        trace: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Formula (default: objective.formula of the config).
        #[arg(long)]
        formula: Option<String>,
    },
    /// Full decision: realizable (exit 0) or not realizable (exit 1).
    Decide,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            tau: self.tau,
            eta: self.eta,
            mu: self.mu,
            seed: self.seed,
        }
    }

    fn exec(&self) -> Exec {
        if self.jobs == Some(1) {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn problem(&self) -> Result<Problem> {
        let path = self.config.as_ref().context("--config is required for this command")?;
        let p = Problem::load(path)?;
        for w in &p.warnings {
            eprintln!("warning: {w}");
        }
        Ok(p)
    }
}

/// CSV float: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: &'a str,
    config: &'a crate::config::RunConfig,
    overrides: OverrideRecord,
    report: T,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct OverrideRecord {
    tau: Option<f64>,
    eta: Option<f64>,
    mu: Option<f64>,
    seed: Option<u64>,
}

fn write_manifest<T: Serialize>(common: &Common, problem: &Problem, command: &str, report: T, outputs: Vec<String>) -> Result<PathBuf> {
    let ov = common.overrides();
    let m = Manifest {
        tool: "certabs",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: &problem.hash,
        config: &problem.config,
        overrides: OverrideRecord {
            tau: ov.tau,
            eta: ov.eta,
            mu: ov.mu,
            seed: ov.seed,
        },
        report,
        // relative to the output directory so manifests do not depend on where it lives
        outputs: outputs
            .iter()
            .map(|o| {
                Path::new(o)
                    .strip_prefix(&common.out)
                    .map_or_else(|_| o.clone(), |p| p.display().to_string())
            })
            .collect(),
    };
    let path = common.out.join(format!("{command}.manifest.json"));
    write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(path)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: &Cli) -> Result<i32> {
    let common = &cli.common;
    certabs_core::par::with_jobs(common.jobs, || match &cli.command {
        Command::Params => cmd_params(common),
        Command::Sweep { from, to, count } => cmd_sweep(common, *from, *to, *count),
        Command::Abstract => cmd_abstract(common),
        Command::Synth => cmd_synth(common),
        Command::Simulate { strategy, runs } => cmd_simulate(common, strategy.as_deref(), *runs),
        Command::Check {
            trace,
            trajectory,
            formula,
        } => cmd_check(common, trace.as_deref(), trajectory.as_deref(), formula.as_deref()),
        Command::Decide => cmd_decide(common),
    })
}

fn cmd_params(common: &Common) -> Result<i32> {
    let problem = common.problem()?;
    let r = resolve_params(&problem, &common.overrides())?;
    let p = &r.params;
    let mut s = String::new();
    writeln!(s, "source      = {}", r.source)?;
    writeln!(s, "L           = {}", r.lipschitz)?;
    writeln!(s, "M           = {}", r.bound)?;
    writeln!(s, "tau         = {}", p.tau)?;
    writeln!(s, "eta         = {}", p.eta)?;
    writeln!(s, "mu          = {}", p.mu)?;
    writeln!(s, "radius      = {}", p.radius)?;
    writeln!(s, "eps1        = {}", p.eps1)?;
    writeln!(s, "eps2        = {}", p.eps2)?;
    writeln!(
        s,
        "margin      = {} < delta2 = {} : {}",
        p.margin.unwrap_or(f64::NAN),
        p.delta2,
        r.margin_ok
    )?;
    writeln!(s, "eps1 + eps2 = {} <= epsilon = {} : {}", p.eps1 + p.eps2, p.epsilon, r.epsilon_ok)?;
    writeln!(s, "delta2_min  = {}", r.delta2_min)?;
    writeln!(s, "eps_min     = {}", r.eps_min)?;
    if let (Some(t), Some(b)) = (r.tau_star, r.mismatch_bound) {
        writeln!(s, "r*          = {b} (tau* = {t})")?;
    }
    print!("{s}");
    write_manifest(common, &problem, "params", &r, vec![])?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SweepReport {
    from: f64,
    to: f64,
    count: usize,
    delta1: f64,
    delta2_min_increasing: bool,
    note: String,
}

/// Log-spaced periods from `from` to `to`.
pub fn log_space(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![from],
        _ => (0..count)
            .map(|i| {
                if i == count - 1 {
                    to
                } else {
                    from * (to / from).powf(i as f64 / (count - 1) as f64)
                }
            })
            .collect(),
    }
}

pub const SWEEP_HEADER: &str = "tau,eta,mu,delta2_min,eps_min";

/// Sweep rows under the schedule `η = τ²`, `μ = τ`.
pub fn sweep_rows(l: f64, m: f64, delta1: f64, taus: &[f64]) -> Result<Vec<[f64; 5]>> {
    taus.iter()
        .map(|&t| {
            let (d2, e) = min_delta2_for_tau(l, m, t, delta1)?;
            Ok([t, t * t, t, d2, e])
        })
        .collect()
}

fn cmd_sweep(common: &Common, from: f64, to: f64, count: usize) -> Result<i32> {
    if !(from > 0.0 && to >= from && to.is_finite()) {
        bail!("need 0 < from <= to, got from = {from}, to = {to}");
    }
    let problem = common.problem()?;
    let delta1 = problem.config.parameters.delta1;
    let rows = sweep_rows(problem.sys.lipschitz, problem.sys.bound, delta1, &log_space(from, to, count))?;
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    let path = common.out.join("sweep.csv");
    write(&path, &csv)?;
    let increasing = rows.windows(2).all(|w| w[1][3] > w[0][3]);
    let at = sweep_rows(problem.sys.lipschitz, problem.sys.bound, delta1, &[0.2])?[0];
    let note = format!(
        "schedule eta = tau^2, mu = tau; at tau = 0.2 this gives delta2_min = {:.6} and eps_min = {:.6}, \
         so the published (tau = 0.2, delta = 0.1, eps = 0.02) triple is not reproduced: its schedule is unstated",
        at[3], at[4]
    );
    print!("{csv}");
    eprintln!("delta2_min strictly increasing: {increasing}");
    eprintln!("note: {note}");
    write_manifest(
        common,
        &problem,
        "sweep",
        SweepReport {
            from,
            to,
            count,
            delta1,
            delta2_min_increasing: increasing,
            note,
        },
        vec![path.display().to_string()],
    )?;
    Ok(0)
}

fn cmd_abstract(common: &Common) -> Result<i32> {
    let problem = common.problem()?;
    let r = resolve_params(&problem, &common.overrides())?;
    let built = build(&problem, &r.params, common.exec())?;
    let a = &built.report;
    println!("states        = {} {:?}", a.states, a.state_counts);
    println!("actions       = {} {:?}", a.actions, a.control_counts);
    println!("blocked pairs = {}", a.blocked_pairs);
    println!("digest        = {}", a.digest);
    if let Some(sw) = &a.sandwich {
        println!(
            "sandwich      = {} (lower violations {}, upper violations {})",
            if sw.passed { "pass" } else { "fail" },
            sw.lower_violations,
            sw.upper_violations
        );
    }
    #[derive(Serialize)]
    struct Report<'a> {
        params: &'a crate::pipeline::ParamReport,
        abstraction: &'a crate::pipeline::AbstractionReport,
    }
    write_manifest(
        common,
        &problem,
        "abstract",
        Report {
            params: &r,
            abstraction: a,
        },
        vec![],
    )?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct DecisionReport<'a> {
    params: &'a crate::pipeline::ParamReport,
    abstraction: &'a crate::pipeline::AbstractionReport,
    objective: &'a certabs_core::synthesis::Objective,
    winning_cells: usize,
    iterations: usize,
    realizable: bool,
    verdict: String,
    losing_initial_total: usize,
    losing_initial_sample: &'a [Vec<usize>],
}

fn write_strategy(common: &Common, s: &Strategy) -> Result<PathBuf> {
    let path = common.out.join("strategy.json");
    write(&path, serde_json::to_string(s)? + "\n")?;
    Ok(path)
}

fn cmd_synth(common: &Common) -> Result<i32> {
    let problem = common.problem()?;
    let d = decide(&problem, &common.overrides(), common.exec())?;
    let path = write_strategy(common, &d.strategy)?;
    println!("winning cells = {} of {}", d.solution.winning_count(), d.abstraction.states);
    println!("iterations    = {}", d.solution.iterations);
    println!("strategy      = {}", path.display());
    let report = DecisionReport {
        params: &d.params,
        abstraction: &d.abstraction,
        objective: &d.objective,
        winning_cells: d.solution.winning_count(),
        iterations: d.solution.iterations,
        realizable: d.realizable,
        verdict: String::new(),
        losing_initial_total: d.losing_initial_total,
        losing_initial_sample: &d.losing_initial,
    };
    write_manifest(common, &problem, "synth", report, vec![path.display().to_string()])?;
    Ok(0)
}

fn cmd_decide(common: &Common) -> Result<i32> {
    let problem = common.problem()?;
    let d = decide(&problem, &common.overrides(), common.exec())?;
    let formula = problem.config.objective.as_ref().map(|o| o.formula.trim()).unwrap_or_default();
    let (verdict, outputs) = if d.realizable {
        let path = write_strategy(common, &d.strategy)?;
        (
            format!("({formula}, L) realizable for S_delta1 with delta1 = {}", d.params.params.delta1),
            vec![path.display().to_string()],
        )
    } else {
        (
            format!(
                "({formula}, L_eps) not realizable for S_delta2 with delta2 = {} at this certified abstraction",
                d.params.params.delta2
            ),
            vec![],
        )
    };
    println!("{verdict}");
    println!("winning cells = {} of {}", d.solution.winning_count(), d.abstraction.states);
    if !d.realizable {
        println!("losing initial cells = {} (first: {:?})", d.losing_initial_total, d.losing_initial.first());
    }
    let report = DecisionReport {
        params: &d.params,
        abstraction: &d.abstraction,
        objective: &d.objective,
        winning_cells: d.solution.winning_count(),
        iterations: d.solution.iterations,
        realizable: d.realizable,
        verdict,
        losing_initial_total: d.losing_initial_total,
        losing_initial_sample: &d.losing_initial,
    };
    write_manifest(common, &problem, "decide", report, outputs)?;
    Ok(if d.realizable { 0 } else { 1 })
}

pub const RUNS_HEADER: &str = "run,seed,periods,exited,refused,discrete,continuous,max_deviation,bound";

/// Dense trajectory as CSV: time, states, then the control held from that
/// sample on (blank on the final sample).
pub fn trajectory_csv(traj: &Trajectory, state_names: &[String], control_names: &[String]) -> String {
    let mut out = String::from("t");
    for n in state_names.iter().chain(control_names) {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let s = traj.substeps.max(1);
    for (k, (t, x)) in traj.t.iter().zip(&traj.x).enumerate() {
        out.push_str(&num(*t));
        for v in x {
            out.push(',');
            out.push_str(&num(*v));
        }
        match traj.controls.get(k / s).filter(|_| k + 1 < traj.x.len()) {
            Some(u) => u.iter().for_each(|v| {
                out.push(',');
                out.push_str(&num(*v));
            }),
            None => control_names.iter().for_each(|_| out.push(',')),
        }
        out.push('\n');
    }
    out
}

/// Trace file layout shared by `simulate` (writer) and `check` (reader).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    #[serde(default)]
    pub alphabet: Option<Vec<String>>,
    pub steps: Vec<Vec<String>>,
}

impl TraceFile {
    pub fn from_trace(t: &Trace) -> Self {
        TraceFile {
            alphabet: Some(t.alphabet.clone()),
            steps: t
                .steps
                .iter()
                .map(|s| s.iter().map(|i| t.alphabet[i].clone()).collect())
                .collect(),
        }
    }

    pub fn to_trace(&self) -> Result<Trace> {
        let Some(alphabet) = &self.alphabet else {
            return Ok(Trace::from_names(&self.steps));
        };
        let mut steps = Vec::with_capacity(self.steps.len());
        for (k, step) in self.steps.iter().enumerate() {
            let mut s = PropSet::EMPTY;
            for name in step {
                let i = alphabet
                    .iter()
                    .position(|a| a == name)
                    .with_context(|| format!("step {k}: unknown proposition `{name}`"))?;
                s.insert(i);
            }
            steps.push(s);
        }
        Ok(Trace::new(alphabet.clone(), steps))
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    strategy_sha256: String,
    runs: usize,
    period: f64,
    delta: f64,
    steps: usize,
    substeps: usize,
    seed: u64,
    bound: f64,
    discrete_sat: usize,
    continuous_sat: usize,
    continuous_unknown: usize,
    refusals: usize,
    exits: usize,
    deviation_within_bound: usize,
}

fn cmd_simulate(common: &Common, strategy: Option<&Path>, runs: Option<usize>) -> Result<i32> {
    let problem = common.problem()?;
    let default = common.out.join("strategy.json");
    let spath = strategy.unwrap_or(&default);
    let bytes = fs::read(spath).with_context(|| format!("reading {}", spath.display()))?;
    let strat: Strategy = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", spath.display()))?;
    if strat.states.dim() != problem.sys.n() {
        bail!("strategy grid dimension does not match the system");
    }
    let sim = &problem.config.simulation;
    let runs = runs.unwrap_or(sim.runs);
    let seed = common.seed.unwrap_or(sim.seed);
    let delta = sim.delta.unwrap_or(problem.config.parameters.delta1);
    let formula = problem.require_formula()?;
    let settings = RunSettings {
        tau: strat.period,
        delta,
        steps: sim.steps * strat.dwell as usize,
        substeps: sim.substeps,
    };
    let starts = sample_starts(&strat, problem.initial.as_ref(), runs, seed)?;
    let reports = run_batch(&problem.sys, &strat, &problem.labels, formula, &starts, settings, seed, common.exec())?;
    let bound = intersample_bound(problem.sys.bound, delta, strat.period);
    let outputs = write_runs(common, &problem, &reports, bound)?;
    let count = |f: &dyn Fn(&RunReport) -> bool| reports.iter().filter(|r| f(r)).count();
    let rep = SimulateReport {
        strategy_sha256: hash_bytes(&bytes),
        runs,
        period: strat.period,
        delta,
        steps: settings.steps,
        substeps: settings.substeps,
        seed,
        bound,
        discrete_sat: count(&|r| r.discrete == Verdict::Sat),
        continuous_sat: count(&|r| r.continuous == Verdict::Sat),
        continuous_unknown: count(&|r| r.continuous == Verdict::Unknown),
        refusals: count(&|r| r.refusal.is_some()),
        exits: count(&|r| r.trajectory.exited.is_some()),
        deviation_within_bound: count(&|r| r.max_deviation <= bound + 1e-6),
    };
    println!("runs = {}, discrete sat = {}, continuous sat = {}, continuous unknown = {}, refusals = {}, exits = {}, deviation within bound = {}",
        rep.runs, rep.discrete_sat, rep.continuous_sat, rep.continuous_unknown, rep.refusals, rep.exits, rep.deviation_within_bound);
    for r in reports.iter().filter(|r| r.refusal.is_some()) {
        eprintln!("error: run with seed {} hit a controller refusal: {}", r.seed, r.refusal.as_deref().unwrap_or(""));
    }
    write_manifest(common, &problem, "simulate", rep, outputs)?;
    Ok(0)
}

fn write_runs(common: &Common, problem: &Problem, reports: &[RunReport], bound: f64) -> Result<Vec<String>> {
    let mut table = String::from(RUNS_HEADER);
    table.push('\n');
    let mut outputs = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        writeln!(
            table,
            "{i},{},{},{},{},{},{},{},{}",
            r.seed,
            r.periods,
            r.trajectory.exited.is_some(),
            r.refusal.is_some(),
            r.discrete,
            r.continuous,
            num(r.max_deviation),
            num(bound)
        )?;
        let tpath = common.out.join("trajectories").join(format!("run_{i:05}.csv"));
        write(
            &tpath,
            trajectory_csv(&r.trajectory, &problem.sys.state_names, &problem.sys.control_names),
        )?;
        let rpath = common.out.join("traces").join(format!("run_{i:05}.json"));
        write(&rpath, serde_json::to_string(&TraceFile::from_trace(&r.trace))? + "\n")?;
        outputs.push(tpath.display().to_string());
        outputs.push(rpath.display().to_string());
    }
    let path = common.out.join("runs.csv");
    write(&path, &table)?;
    outputs.insert(0, path.display().to_string());
    Ok(outputs)
}

/// Reads a trajectory CSV written by `simulate`; columns are matched to the
/// state names by header, extra columns are ignored.
pub fn read_trajectory(text: &str, state_names: &[String]) -> Result<Trajectory> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("empty trajectory file")?.split(',').map(str::trim).collect();
    let tcol = header.iter().position(|h| *h == "t").context("trajectory file has no `t` column")?;
    let cols: Vec<usize> = state_names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .with_context(|| format!("trajectory file has no `{n}` column"))
        })
        .collect::<Result<_>>()?;
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |c: usize| -> Result<f64> {
            fields
                .get(c)
                .context("short row")?
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number", k + 1))
        };
        t.push(parse(tcol)?);
        x.push(cols.iter().map(|&c| parse(c)).collect::<Result<Vec<f64>>>()?);
    }
    if x.is_empty() {
        bail!("trajectory file has no samples");
    }
    let h = if t.len() > 1 { t[1] - t[0] } else { 0.0 };
    Ok(Trajectory {
        h,
        substeps: 1,
        t,
        x,
        controls: vec![],
        disturbances: vec![],
        exited: None,
    })
}

fn cmd_check(common: &Common, trace: Option<&Path>, trajectory: Option<&Path>, formula: Option<&str>) -> Result<i32> {
    let problem = match &common.config {
        Some(_) => Some(common.problem()?),
        None => None,
    };
    let f: Formula = match (formula, &problem) {
        (Some(text), _) => parse_formula(text)?,
        (None, Some(p)) => p.require_formula()?.clone(),
        (None, None) => bail!("give --formula or a --config with an objective"),
    };
    let verdict = match (trace, trajectory) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: TraceFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let t = file.to_trace()?;
            if let Some(p) = &problem {
                if let Some(bad) = t.alphabet.iter().find(|a| p.labels.index(a).is_none()) {
                    bail!("trace uses proposition `{bad}` not declared in the config");
                }
            }
            check_discrete(&t, &f)?
        }
        (None, Some(path)) => {
            let p = problem.as_ref().context("--trajectory needs --config for the labelling")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let traj = read_trajectory(&text, &p.sys.state_names)?;
            check_labels(&f, &p.labels)?;
            check_continuous(&traj, &p.labels, &f)?
        }
        (None, None) => bail!("give --trace or --trajectory"),
    };
    println!("{verdict}");
    println!("convention: finite trace, U needs a witness within the trace, R is checked over the available positions");
    Ok(0)
}

fn check_labels(f: &Formula, labels: &LabellingSpec) -> Result<()> {
    for a in f.atoms() {
        if labels.index(a).is_none() {
            bail!("unknown proposition `{a}`");
        }
    }
    Ok(())
}
