//! Fixed-point controller synthesis for `□p`, `◇p` and `p U q` on finite
//! abstractions, dwell-time wrapping, and the refined sampled-data controller.
//!
//! Abstract nondeterminism is adversarial: an action certifies a cell only if
//! every successor lands in the target set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{FiniteAbstraction, SuccessorTable};
use crate::geometry::{Bounds, Grid, Norm};
use crate::labelling::{LabellingSpec, PropSet};
use crate::logic::{check_continuous, check_discrete, Formula, LogicError, Trace, Verdict};
use crate::par::Exec;
use crate::system::{integrate_period, SimError, SystemSpec, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("objective `{0}` is outside the supported fragment (G p, F p, p U q with propositional p, q)")]
    Unsupported(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("labelling has {labels} cells but the arena has {states}")]
    LabelCount { labels: usize, states: usize },
    #[error("controller refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("strategy file: {0}")]
    Format(String),
}

/// A finite game arena: cells, actions, and adversarial successor sets.
pub trait Arena: Sync {
    /// Precomputed view of a cell set that makes containment queries cheap.
    type Frontier: Sync;

    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn is_blocked(&self, q: usize, a: usize) -> bool;
    fn frontier(&self, w: &[bool]) -> Self::Frontier;
    /// `Post(q, a) ⊆ W` for an unblocked pair.
    fn post_within(&self, q: usize, a: usize, w: &Self::Frontier) -> bool;
    fn successors(&self, q: usize, a: usize) -> Vec<usize>;
}

/// An arena given by explicit successor lists; an empty list means blocked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitArena {
    num_states: usize,
    num_actions: usize,
    post: Vec<Vec<usize>>,
}

impl ExplicitArena {
    /// `post[q][a]` lists the successors of `(q, a)`.
    pub fn new(post: Vec<Vec<Vec<usize>>>) -> Self {
        let num_states = post.len();
        let num_actions = post.first().map_or(0, |r| r.len());
        assert!(post.iter().all(|r| r.len() == num_actions), "ragged action lists");
        let post: Vec<Vec<usize>> = post.into_iter().flatten().collect();
        assert!(post.iter().flatten().all(|&s| s < num_states), "successor out of range");
        ExplicitArena {
            num_states,
            num_actions,
            post,
        }
    }
}

impl Arena for ExplicitArena {
    type Frontier = Vec<bool>;

    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn is_blocked(&self, q: usize, a: usize) -> bool {
        self.post[q * self.num_actions + a].is_empty()
    }

    fn frontier(&self, w: &[bool]) -> Vec<bool> {
        w.to_vec()
    }

    fn post_within(&self, q: usize, a: usize, w: &Vec<bool>) -> bool {
        self.post[q * self.num_actions + a].iter().all(|&s| w[s])
    }

    fn successors(&self, q: usize, a: usize) -> Vec<usize> {
        self.post[q * self.num_actions + a].clone()
    }
}

/// Summed-area table over the state grid: counts members of `W` in any
/// box of cells with `2^n` lookups.
pub struct PrefixCount {
    /// Strides of the `(counts + 1)`-shaped table.
    strides: Vec<usize>,
    sums: Vec<u32>,
}

impl PrefixCount {
    fn new(counts: &[usize], w: &[bool]) -> Self {
        let n = counts.len();
        let dims: Vec<usize> = counts.iter().map(|c| c + 1).collect();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let total: usize = dims.iter().product();
        let mut sums = vec![0u32; total];
        let mut cell_strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            cell_strides[i] = cell_strides[i + 1] * counts[i + 1];
        }
        // seed: sums[idx + 1] = w[idx]
        for (flat, &member) in w.iter().enumerate() {
            if member {
                let mut rest = flat;
                let mut at = 0;
                for i in 0..n {
                    at += (rest / cell_strides[i] + 1) * strides[i];
                    rest %= cell_strides[i];
                }
                sums[at] = 1;
            }
        }
        for axis in 0..n {
            let s = strides[axis];
            for k in 0..total {
                if !(k / s).is_multiple_of(dims[axis]) {
                    sums[k] += sums[k - s];
                }
            }
        }
        PrefixCount { strides, sums }
    }

    /// Members of `W` inside the inclusive index box `[lo, hi]`.
    fn count(&self, lo: &[u16], hi: &[u16]) -> i64 {
        let n = lo.len();
        let mut total = 0i64;
        for corner in 0..1usize << n {
            let mut at = 0;
            let mut lows = 0;
            for i in 0..n {
                let k = if corner >> i & 1 == 1 {
                    hi[i] as usize + 1
                } else {
                    lows += 1;
                    lo[i] as usize
                };
                at += k * self.strides[i];
            }
            let v = self.sums[at] as i64;
            total += if lows % 2 == 0 { v } else { -v };
        }
        total
    }
}

impl Arena for SuccessorTable {
    type Frontier = PrefixCount;

    fn num_states(&self) -> usize {
        SuccessorTable::num_states(self)
    }

    fn num_actions(&self) -> usize {
        SuccessorTable::num_actions(self)
    }

    fn is_blocked(&self, q: usize, a: usize) -> bool {
        SuccessorTable::is_blocked(self, q, a)
    }

    fn frontier(&self, w: &[bool]) -> PrefixCount {
        PrefixCount::new(self.counts(), w)
    }

    fn post_within(&self, q: usize, a: usize, w: &PrefixCount) -> bool {
        let Some((lo, hi)) = self.range(q, a) else {
            return false;
        };
        let size: i64 = lo.iter().zip(hi).map(|(l, h)| (*h - *l) as i64 + 1).product();
        w.count(lo, hi) == size
    }

    fn successors(&self, q: usize, a: usize) -> Vec<usize> {
        SuccessorTable::successors(self, q, a)
    }
}

/// Least unblocked action at `q` whose successors all lie in `w`.
fn certifying_action<A: Arena>(arena: &A, q: usize, w: &A::Frontier) -> Option<u32> {
    (0..arena.num_actions())
        .find(|&a| !arena.is_blocked(q, a) && arena.post_within(q, a, w))
        .map(|a| a as u32)
}

/// Controllable predecessor: cells with an unblocked action whose
/// successors all lie in `w`.
pub fn cpre<A: Arena>(arena: &A, w: &[bool], exec: Exec) -> Vec<bool> {
    let f = arena.frontier(w);
    exec.map_range(arena.num_states(), |q| certifying_action(arena, q, &f).is_some())
}

/// Fragment objectives over cell predicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Objective {
    /// `□ safe`.
    Invariance { safe: Formula },
    /// `constraint U target`; reachability has `constraint = true`.
    Until { constraint: Formula, target: Formula },
}

impl Objective {
    /// Classifies an NNF formula into the supported fragment.
    pub fn from_formula(f: &Formula) -> Result<Self, SynthError> {
        let unsupported = || SynthError::Unsupported(f.to_string());
        match f {
            Formula::Release(lhs, p) if **lhs == Formula::False && p.is_propositional() => {
                Ok(Objective::Invariance { safe: (**p).clone() })
            }
            Formula::Until(c, t) if c.is_propositional() && t.is_propositional() => Ok(Objective::Until {
                constraint: (**c).clone(),
                target: (**t).clone(),
            }),
            _ => Err(unsupported()),
        }
    }

    /// The objective as a formula, for monitoring.
    pub fn formula(&self) -> Formula {
        match self {
            Objective::Invariance { safe } => Formula::always(safe.clone()),
            Objective::Until { constraint, target } => Formula::until(constraint.clone(), target.clone()),
        }
    }
}

/// Per-cell truth of a propositional predicate.
pub fn cell_predicate(p: &Formula, cells: &[PropSet], labels: &LabellingSpec) -> Result<Vec<bool>, SynthError> {
    let index = |a: &str| labels.index(a);
    cells.iter().map(|&s| Ok(p.holds_at(s, &index)?)).collect()
}

const UNDEFINED: u32 = u32::MAX;
/// Until-strategies do not act on target cells: the objective is met there.
const TARGET: u32 = u32::MAX - 1;

/// Result of a fixed-point computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub winning: Vec<bool>,
    /// Certifying action per winning cell (`None` on until-targets and losing cells).
    pub action: Vec<Option<u32>>,
    /// Until: iteration at which the cell entered the attractor. Invariance: 0.
    pub rank: Vec<u32>,
    /// Rounds until the fixed point stabilised.
    pub iterations: usize,
}

impl Solution {
    pub fn winning_count(&self) -> usize {
        self.winning.iter().filter(|&&w| w).count()
    }
}

/// Greatest fixed point `W ← Safe ∩ cpre(W)`.
pub fn solve_invariance<A: Arena>(arena: &A, safe: &[bool], exec: Exec) -> Solution {
    let n = arena.num_states();
    assert_eq!(safe.len(), n);
    let mut w = safe.to_vec();
    let mut iterations = 0;
    loop {
        let pre = cpre(arena, &w, exec);
        let next: Vec<bool> = safe.iter().zip(&pre).map(|(s, p)| *s && *p).collect();
        iterations += 1;
        assert!(next.iter().zip(&w).all(|(a, b)| !*a || *b), "invariance iterate grew");
        if next == w {
            break;
        }
        w = next;
        assert!(iterations <= n + 1, "invariance did not stabilise within |Q| rounds");
    }
    let f = arena.frontier(&w);
    let action = exec.map_range(n, |q| if w[q] { certifying_action(arena, q, &f) } else { None });
    Solution {
        rank: vec![0; n],
        winning: w,
        action,
        iterations,
    }
}

/// Least fixed point `W ← Target ∪ (Constraint ∩ cpre(W))`, recording the
/// round in which each cell joins and the least action that certified it.
pub fn solve_until<A: Arena>(arena: &A, constraint: &[bool], target: &[bool], exec: Exec) -> Solution {
    let n = arena.num_states();
    assert_eq!(constraint.len(), n);
    assert_eq!(target.len(), n);
    let mut w = target.to_vec();
    let mut action = vec![None; n];
    let mut rank = vec![0u32; n];
    let mut iterations = 0;
    loop {
        let f = arena.frontier(&w);
        let fresh: Vec<Option<u32>> = exec.map_range(n, |q| {
            if w[q] || !constraint[q] {
                None
            } else {
                certifying_action(arena, q, &f)
            }
        });
        iterations += 1;
        let mut grew = false;
        for (q, a) in fresh.into_iter().enumerate() {
            if let Some(a) = a {
                w[q] = true;
                action[q] = Some(a);
                rank[q] = iterations as u32;
                grew = true;
            }
        }
        if !grew {
            break;
        }
        assert!(iterations <= n + 1, "attractor did not stabilise within |Q| rounds");
    }
    Solution {
        winning: w,
        action,
        rank,
        iterations,
    }
}

/// Solves `objective` given per-cell labels of the ε1-strengthened labelling.
pub fn solve<A: Arena>(
    arena: &A,
    objective: &Objective,
    cells: &[PropSet],
    labels: &LabellingSpec,
    exec: Exec,
) -> Result<Solution, SynthError> {
    if cells.len() != arena.num_states() {
        return Err(SynthError::LabelCount {
            labels: cells.len(),
            states: arena.num_states(),
        });
    }
    Ok(match objective {
        Objective::Invariance { safe } => solve_invariance(arena, &cell_predicate(safe, cells, labels)?, exec),
        Objective::Until { constraint, target } => solve_until(
            arena,
            &cell_predicate(constraint, cells, labels)?,
            &cell_predicate(target, cells, labels)?,
            exec,
        ),
    })
}

/// Phase of the fragment objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Pursue,
    /// An until-target was reached; the controller stops.
    Done,
}

/// Controller memory: objective phase and dwell counter with its latched action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Memory {
    pub phase: Phase,
    pub counter: u32,
    pub latched: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Act(u32),
    /// Objective discharged; no further control.
    Done,
}

/// A finite-memory strategy over grid cells, optionally dwell-wrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StrategyFile", try_from = "StrategyFile")]
pub struct Strategy {
    pub states: Grid,
    pub controls: Grid,
    pub objective: Objective,
    /// Sampling period the controller runs at.
    pub period: f64,
    pub dwell: u32,
    /// Dense per-cell action, with sentinels for losing and target cells.
    table: Vec<u32>,
}

impl Strategy {
    pub fn from_solution(states: Grid, controls: Grid, objective: Objective, period: f64, sol: &Solution) -> Self {
        assert_eq!(sol.winning.len(), states.len());
        let table = sol
            .winning
            .iter()
            .zip(&sol.action)
            .map(|(w, a)| match (w, a) {
                (false, _) => UNDEFINED,
                (true, Some(a)) => *a,
                (true, None) => TARGET,
            })
            .collect();
        Strategy {
            states,
            controls,
            objective,
            period,
            dwell: 1,
            table,
        }
    }

    pub fn num_states(&self) -> usize {
        self.table.len()
    }

    pub fn is_winning(&self, q: usize) -> bool {
        self.table.get(q).is_some_and(|&a| a != UNDEFINED)
    }

    pub fn winning(&self) -> Vec<bool> {
        (0..self.table.len()).map(|q| self.is_winning(q)).collect()
    }

    pub fn winning_count(&self) -> usize {
        self.table.iter().filter(|&&a| a != UNDEFINED).count()
    }

    pub fn is_empty(&self) -> bool {
        self.winning_count() == 0
    }

    /// Action stored for cell `q`; `None` on losing and target cells.
    pub fn action(&self, q: usize) -> Option<u32> {
        self.table.get(q).copied().filter(|&a| a < TARGET)
    }

    /// `(cell, memory) → (move, next memory)`. The cell is only consulted
    /// when the dwell counter is zero.
    pub fn step(&self, cell: Option<usize>, mem: Memory) -> Result<(Move, Memory), SynthError> {
        if mem.phase == Phase::Done {
            return Ok((Move::Done, mem));
        }
        let next_counter = (mem.counter + 1) % self.dwell.max(1);
        if mem.counter > 0 {
            let a = mem
                .latched
                .ok_or_else(|| SynthError::Refused("dwell counter set without a latched action".into()))?;
            return Ok((
                Move::Act(a),
                Memory {
                    counter: next_counter,
                    ..mem
                },
            ));
        }
        let q = cell.ok_or_else(|| SynthError::Refused("state outside the grid".into()))?;
        match self.table.get(q).copied() {
            None | Some(UNDEFINED) => Err(SynthError::Refused(format!(
                "cell {:?} is not winning",
                self.states.unflatten(q.min(self.table.len().saturating_sub(1)))
            ))),
            Some(TARGET) => Ok((
                Move::Done,
                Memory {
                    phase: Phase::Done,
                    counter: 0,
                    latched: None,
                },
            )),
            Some(a) => Ok((
                Move::Act(a),
                Memory {
                    phase: Phase::Pursue,
                    counter: next_counter,
                    latched: Some(a),
                },
            )),
        }
    }

    /// Sampled-data controller quantizing with the state grid.
    pub fn controller(&self) -> Controller<'_> {
        Controller {
            strategy: self,
            memory: Memory::default(),
        }
    }
}

/// Product with a dwell counter: counter 0 consults `s` and latches, the
/// next `n − 1` periods repeat the latched action. The result runs at
/// `1/n` of the period, so one latched block spans one period of `s`.
pub fn add_dwell(s: &Strategy, n: u32) -> Strategy {
    assert!(n >= 1, "dwell must be at least 1");
    Strategy {
        dwell: s.dwell.max(1) * n,
        period: s.period / n as f64,
        ..s.clone()
    }
}

/// A strategy running against continuous states.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    strategy: &'a Strategy,
    pub memory: Memory,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Control(Vec<f64>),
    Done,
}

impl Controller<'_> {
    /// Quantizes `x`, looks up the strategy, advances memory.
    pub fn decide(&mut self, x: &[f64]) -> Result<Decision, SynthError> {
        let cell = self.strategy.states.flat_index(x).ok();
        if cell.is_none() && self.memory.counter == 0 && self.memory.phase == Phase::Pursue {
            return Err(SynthError::Refused(format!("state {x:?} lies outside the grid")));
        }
        let (mv, next) = self.strategy.step(cell, self.memory)?;
        self.memory = next;
        Ok(match mv {
            Move::Act(a) => {
                let c = &self.strategy.controls;
                Decision::Control(c.representative(&c.unflatten(a as usize)))
            }
            Move::Done => Decision::Done,
        })
    }
}

/// Everything a closed-loop run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub trajectory: Trajectory,
    /// Plain labels at the sampling instants.
    pub trace: Trace,
    pub discrete: Verdict,
    pub continuous: Verdict,
    /// `max_t |x(t) − x(iτ)|` against the nearest sampling instant.
    pub max_deviation: f64,
    /// Periods actually applied.
    pub periods: usize,
    /// Set when the controller refused; always a soundness failure.
    pub refusal: Option<String>,
}

/// Settings of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub tau: f64,
    pub delta: f64,
    pub steps: usize,
    pub substeps: usize,
}

/// Alternates controller lookups and `δ`-perturbed integration for up to
/// `steps` periods; stops early once an until-objective is met.
pub fn closed_loop_run(
    sys: &SystemSpec,
    strategy: &Strategy,
    labels: &LabellingSpec,
    formula: &Formula,
    x0: &[f64],
    settings: RunSettings,
    seed: u64,
) -> Result<RunReport, SynthError> {
    let RunSettings {
        tau,
        delta,
        steps,
        substeps,
    } = settings;
    if substeps == 0 {
        return Err(SimError::Input("substeps must be at least 1".into()).into());
    }
    if !sys.state_box.contains(x0) {
        return Err(SimError::StartOutside(x0.to_vec()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::start(x0.to_vec(), tau / substeps as f64, substeps);
    let mut ctrl = strategy.controller();
    let mut refusal = None;
    let mut periods = 0;
    for _ in 0..steps {
        let u = match ctrl.decide(traj.last()) {
            Ok(Decision::Control(u)) => u,
            Ok(Decision::Done) => break,
            Err(e) => {
                refusal = Some(e.to_string());
                break;
            }
        };
        periods += 1;
        if !integrate_period(sys, &mut traj, &u, tau, delta, &mut rng)? {
            break;
        }
    }
    let alphabet: Vec<String> = labels.names().map(String::from).collect();
    let trace = Trace::new(alphabet, traj.samples().iter().map(|x| labels.label(x)).collect());
    let discrete = check_discrete(&trace, formula)?;
    let continuous = check_continuous(&traj, labels, formula)?;
    Ok(RunReport {
        seed,
        max_deviation: traj.max_intersample_deviation(Norm::Infinity),
        trajectory: traj,
        trace,
        discrete,
        continuous,
        periods,
        refusal,
    })
}

/// Closed-loop runs from `starts[i]` with seed `seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    sys: &SystemSpec,
    strategy: &Strategy,
    labels: &LabellingSpec,
    formula: &Formula,
    starts: &[Vec<f64>],
    settings: RunSettings,
    seed: u64,
    exec: Exec,
) -> Result<Vec<RunReport>, SynthError> {
    exec.map_range(starts.len(), |i| {
        closed_loop_run(sys, strategy, labels, formula, &starts[i], settings, seed.wrapping_add(i as u64))
    })
    .into_iter()
    .collect()
}

/// Start states for closed-loop runs: uniform in `region` if given (every
/// sample must quantize to a winning cell), otherwise a uniform winning cell
/// and a uniform point inside it.
pub fn sample_starts(
    strategy: &Strategy,
    region: Option<&Bounds>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &strategy.states;
    let uniform = |b: &Bounds, rng: &mut ChaCha8Rng| -> Vec<f64> {
        b.lower.iter().zip(&b.upper).map(|(l, h)| rng.gen_range(*l..=*h)).collect()
    };
    match region {
        Some(b) => (0..count)
            .map(|_| {
                let x = uniform(b, &mut rng);
                match grid.flat_index(&x) {
                    Ok(q) if strategy.is_winning(q) => Ok(x),
                    _ => Err(SynthError::Refused(format!("initial state {x:?} is not in the winning set"))),
                }
            })
            .collect(),
        None => {
            let winning: Vec<usize> = (0..strategy.num_states()).filter(|&q| strategy.is_winning(q)).collect();
            if winning.is_empty() && count > 0 {
                return Err(SynthError::Refused("the winning set is empty".into()));
            }
            Ok((0..count)
                .map(|_| {
                    let q = winning[rng.gen_range(0..winning.len())];
                    uniform(&grid.cell_box_clipped(&grid.unflatten(q)), &mut rng)
                })
                .collect())
        }
    }
}

/// Synthesizes on an abstraction's successor table.
pub fn synthesize(
    abs: &FiniteAbstraction,
    table: &SuccessorTable,
    objective: &Objective,
    cells: &[PropSet],
    labels: &LabellingSpec,
    exec: Exec,
) -> Result<(Strategy, Solution), SynthError> {
    let sol = solve(table, objective, cells, labels, exec)?;
    let s = Strategy::from_solution(
        abs.states().clone(),
        abs.controls().clone(),
        objective.clone(),
        abs.params().tau,
        &sol,
    );
    Ok((s, sol))
}

pub const STRATEGY_FORMAT: &str = "certabs-strategy";
pub const STRATEGY_VERSION: u32 = 1;

/// On-disk layout: grids, objective, winning bitmap (hex, LSB first per
/// byte), and one entry per winning cell in index order (`null` = target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub format: String,
    pub version: u32,
    pub states: Grid,
    pub controls: Grid,
    pub objective: Objective,
    pub period: f64,
    pub dwell: u32,
    pub cells: usize,
    pub winning: String,
    pub actions: Vec<Option<u32>>,
}

impl From<Strategy> for StrategyFile {
    fn from(s: Strategy) -> Self {
        let mut bytes = vec![0u8; s.table.len().div_ceil(8)];
        let mut actions = Vec::new();
        for (q, &a) in s.table.iter().enumerate() {
            if a != UNDEFINED {
                bytes[q / 8] |= 1 << (q % 8);
                actions.push((a != TARGET).then_some(a));
            }
        }
        StrategyFile {
            format: STRATEGY_FORMAT.into(),
            version: STRATEGY_VERSION,
            cells: s.table.len(),
            states: s.states,
            controls: s.controls,
            objective: s.objective,
            period: s.period,
            dwell: s.dwell,
            winning: bytes.iter().map(|b| format!("{b:02x}")).collect(),
            actions,
        }
    }
}

impl TryFrom<StrategyFile> for Strategy {
    type Error = SynthError;

    fn try_from(f: StrategyFile) -> Result<Self, SynthError> {
        let bad = |m: &str| SynthError::Format(m.to_string());
        if f.format != STRATEGY_FORMAT {
            return Err(bad("unrecognised format tag"));
        }
        if f.version != STRATEGY_VERSION {
            return Err(SynthError::Format(format!("unsupported version {}", f.version)));
        }
        if f.cells != f.states.len() {
            return Err(bad("cell count does not match the state grid"));
        }
        if !(f.period > 0.0 && f.period.is_finite()) {
            return Err(bad("period must be positive"));
        }
        if f.dwell == 0 {
            return Err(bad("dwell must be at least 1"));
        }
        if f.winning.len() != 2 * f.cells.div_ceil(8) {
            return Err(bad("winning bitmap has the wrong length"));
        }
        let bytes = (0..f.winning.len() / 2)
            .map(|i| u8::from_str_radix(&f.winning[2 * i..2 * i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|_| bad("winning bitmap is not hex"))?;
        let mut table = vec![UNDEFINED; f.cells];
        let mut next = f.actions.iter();
        let num_actions = f.controls.len() as u32;
        for (q, slot) in table.iter_mut().enumerate() {
            if bytes[q / 8] >> (q % 8) & 1 == 1 {
                *slot = match next.next().ok_or_else(|| bad("fewer actions than winning cells"))? {
                    None => TARGET,
                    Some(a) if *a < num_actions => *a,
                    Some(_) => return Err(bad("action index out of range")),
                };
            }
        }
        if next.next().is_some() {
            return Err(bad("more actions than winning cells"));
        }
        Ok(Strategy {
            states: f.states,
            controls: f.controls,
            objective: f.objective,
            period: f.period,
            dwell: f.dwell,
            table,
        })
    }
}
