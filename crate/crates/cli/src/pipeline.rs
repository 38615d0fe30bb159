//! The decision pipeline: parameters, abstraction, strengthened cell labels,
//! synthesis, verdict.

use anyhow::{bail, Context, Result};
use certabs_core::abstraction::{
    check_sandwich, choose_parameters, dwell_mismatch_bound, min_delta2_for_tau, AbstractionParams, FiniteAbstraction,
    SandwichReport, ScalarAffine, SuccessorTable,
};
use certabs_core::geometry::Bounds;
use certabs_core::logic::to_nnf_with;
use certabs_core::synthesis::{add_dwell, synthesize, Objective, Solution, Strategy};
use certabs_core::Exec;
use serde::Serialize;

use crate::config::Problem;

/// Command-line overrides of the `[parameters]` and `[simulation]` values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
}

/// Parameters plus the derived quantities the params report prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamReport {
    pub params: AbstractionParams,
    pub lipschitz: f64,
    pub bound: f64,
    /// How `τ` was obtained: `"search"` or `"fixed"`.
    pub source: &'static str,
    /// `δ2_min` and `ε_min` at the chosen `τ` (default schedule, preserving cells).
    pub delta2_min: f64,
    pub eps_min: f64,
    pub margin_ok: bool,
    pub epsilon_ok: bool,
    pub tau_star: Option<f64>,
    pub mismatch_bound: Option<f64>,
}

/// Resolves `(τ, η, μ)`: a fixed `τ` (config or flag) gets the schedule
/// `η = τ²`, `μ = τ` unless overridden; otherwise the largest feasible `τ`
/// is searched. Either way the result must pass validation.
pub fn resolve_params(problem: &Problem, ov: &Overrides) -> Result<ParamReport> {
    let p = &problem.config.parameters;
    let (l, m) = (problem.sys.lipschitz, problem.sys.bound);
    let tau = ov.tau.or(p.tau);
    let eta = ov.eta.or(p.eta);
    let mu = ov.mu.or(p.mu);
    let (params, source) = match tau {
        Some(tau) => (
            AbstractionParams::derive(
                l,
                m,
                tau,
                eta.unwrap_or(tau * tau),
                mu.unwrap_or(tau),
                p.delta1,
                p.delta2,
                p.epsilon,
                p.preserving,
            ),
            "fixed",
        ),
        None => {
            let chosen = choose_parameters(l, m, p.delta1, p.delta2, p.epsilon, p.preserving)?;
            let params = if eta.is_some() || mu.is_some() {
                AbstractionParams::derive(
                    l,
                    m,
                    chosen.tau,
                    eta.unwrap_or(chosen.eta),
                    mu.unwrap_or(chosen.mu),
                    p.delta1,
                    p.delta2,
                    p.epsilon,
                    p.preserving,
                )
            } else {
                chosen
            };
            (params, "search")
        }
    };
    params
        .validate(l, m)
        .with_context(|| format!("parameters τ = {}, η = {}, μ = {}", params.tau, params.eta, params.mu))?;
    let (delta2_min, eps_min) = min_delta2_for_tau(l, m, params.tau, p.delta1)?;
    let mismatch_bound = p
        .tau_star
        .map(|t| dwell_mismatch_bound(t, p.delta1, p.delta2))
        .transpose()?;
    Ok(ParamReport {
        margin_ok: params.margin_ok(),
        epsilon_ok: params.epsilon_ok(),
        params,
        lipschitz: l,
        bound: m,
        source,
        delta2_min,
        eps_min,
        tau_star: p.tau_star,
        mismatch_bound,
    })
}

/// Size and shape of a built abstraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstractionReport {
    pub states: usize,
    pub actions: usize,
    pub state_counts: Vec<usize>,
    pub control_counts: Vec<usize>,
    pub blocked_pairs: usize,
    pub digest: String,
    pub sandwich: Option<SandwichSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichSummary {
    pub pairs_checked: usize,
    pub pairs_blocked: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub passed: bool,
}

impl From<&SandwichReport> for SandwichSummary {
    fn from(r: &SandwichReport) -> Self {
        SandwichSummary {
            pairs_checked: r.pairs_checked,
            pairs_blocked: r.pairs_blocked,
            lower_violations: r.lower_violations,
            upper_violations: r.upper_violations,
            passed: r.passed(),
        }
    }
}

pub struct Built {
    pub abs: FiniteAbstraction,
    pub table: SuccessorTable,
    pub report: AbstractionReport,
}

/// Builds the abstraction and its successor table. Scalar affine systems
/// also get the exact sandwich check.
pub fn build(problem: &Problem, params: &AbstractionParams, exec: Exec) -> Result<Built> {
    let abs = FiniteAbstraction::build(&problem.sys, params.clone(), problem.config.parameters.max_cells)?;
    let table = abs.table(exec)?;
    let sandwich = match ScalarAffine::detect(&problem.sys) {
        Ok(_) => Some(SandwichSummary::from(&check_sandwich(&abs, params.delta2)?)),
        Err(_) => None,
    };
    let report = AbstractionReport {
        states: abs.num_states(),
        actions: abs.num_actions(),
        state_counts: abs.states().counts().to_vec(),
        control_counts: abs.controls().counts().to_vec(),
        blocked_pairs: table.blocked_pairs(),
        digest: format!("{:016x}", table.digest()),
        sandwich,
    };
    Ok(Built { abs, table, report })
}

/// Result of the full decision procedure.
pub struct Decision {
    pub params: ParamReport,
    pub abstraction: AbstractionReport,
    pub objective: Objective,
    pub solution: Solution,
    pub strategy: Strategy,
    pub realizable: bool,
    /// Initial cells (multi-indices) outside the winning set.
    pub losing_initial: Vec<Vec<usize>>,
    pub losing_initial_total: usize,
}

/// Cells whose clipped box meets `b`.
pub fn cells_meeting(grid: &certabs_core::geometry::Grid, b: &Bounds) -> Result<Vec<usize>> {
    let lo = grid.cell_index(&b.lower)?;
    let hi = grid.cell_index(&b.upper)?;
    let mut out = Vec::new();
    let mut idx = lo.clone();
    loop {
        out.push(grid.flatten(&idx));
        let mut axis = idx.len();
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            if idx[axis] < hi[axis] {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo[axis];
        }
    }
}

/// Runs the pipeline up to the verdict.
pub fn decide(problem: &Problem, ov: &Overrides, exec: Exec) -> Result<Decision> {
    let formula = problem.require_formula()?;
    let nnf = to_nnf_with(formula, &problem.labels)?;
    let objective = Objective::from_formula(&nnf)?;
    let params = resolve_params(problem, ov)?;
    let built = build(problem, &params.params, exec)?;
    let strong = problem.labels.strengthen(params.params.eps1);
    let cells = strong.cell_label(built.abs.states(), exec);
    let (strategy, solution) = synthesize(&built.abs, &built.table, &objective, &cells, &strong, exec)?;
    let dwell = problem.config.parameters.dwell;
    let strategy = if dwell > 1 { add_dwell(&strategy, dwell) } else { strategy };

    let (realizable, losing): (bool, Vec<usize>) = match &problem.initial {
        Some(b) => {
            let losing: Vec<usize> = cells_meeting(built.abs.states(), b)?
                .into_iter()
                .filter(|&q| !solution.winning[q])
                .collect();
            (losing.is_empty(), losing)
        }
        None => {
            let any = solution.winning.iter().any(|&w| w);
            let losing = if any { Vec::new() } else { (0..solution.winning.len()).collect() };
            (any, losing)
        }
    };
    if solution.winning.len() != built.abs.num_states() {
        bail!("internal: solution size mismatch");
    }
    let states = built.abs.states();
    Ok(Decision {
        losing_initial_total: losing.len(),
        losing_initial: losing.iter().take(32).map(|&q| states.unflatten(q)).collect(),
        params,
        abstraction: built.report,
        objective,
        solution,
        strategy,
        realizable,
    })
}
