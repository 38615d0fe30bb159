//! Grid abstractions of sampled systems and their parameter bookkeeping.
//!
//! Abstract states are the cells of a grid of width `η` over `X`, actions are
//! the cells of a grid of width `μ` over `U`. From cell `q` under action `a`
//! the successors are the cells whose representative lies within the
//! transition radius `r` of the Euler endpoint `q + τ f(q, a)`.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::geometry::{Bounds, CellRange, GeometryError, Grid};
use crate::par::Exec;
use crate::system::{gronwall_radius, margin_lhs, phi1, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbsError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(
        "no feasible sampling period above {tau_floor:e}: margin {margin:e} vs δ2 = {delta2}, \
         ε1 + ε2 = {eps_sum:e} vs ε = {epsilon}"
    )]
    NoFeasiblePeriod {
        tau_floor: f64,
        margin: f64,
        delta2: f64,
        eps_sum: f64,
        epsilon: f64,
    },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("evaluating dynamics: {0}")]
    Expr(#[from] ExprError),
    #[error("system is not affine in one state dimension: {0}")]
    NotAffine(String),
}

/// `(ε1, ε2)`: the labelling margins consumed by inter-sample drift under
/// `δ1` and `δ2`, each with an extra `η/2` when cells do not preserve
/// propositions.
pub fn strengthening_margins(m: f64, delta1: f64, delta2: f64, tau: f64, eta: f64, preserving: bool) -> (f64, f64) {
    let extra = if preserving { 0.0 } else { 0.5 * eta };
    (
        (m + delta1) * tau / 2.0 + extra,
        (m + delta2) * tau / 2.0 + extra,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionParams {
    pub tau: f64,
    pub eta: f64,
    pub mu: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub radius: f64,
    /// `margin_lhs` at these values; `None` when `τ = 0`.
    pub margin: Option<f64>,
    pub preserving: bool,
}

impl AbstractionParams {
    /// Derives `ε1`, `ε2`, `r` and the margin from the free parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        l: f64,
        m: f64,
        tau: f64,
        eta: f64,
        mu: f64,
        delta1: f64,
        delta2: f64,
        epsilon: f64,
        preserving: bool,
    ) -> Self {
        let (eps1, eps2) = strengthening_margins(m, delta1, delta2, tau, eta, preserving);
        AbstractionParams {
            tau,
            eta,
            mu,
            delta1,
            delta2,
            epsilon,
            eps1,
            eps2,
            radius: gronwall_radius(eta, mu, tau, delta1, l, m),
            margin: margin_lhs(eta, mu, tau, delta1, l, m).ok(),
            preserving,
        }
    }

    /// The default schedule `η = τ²`, `μ = τ`.
    pub fn scheduled(l: f64, m: f64, tau: f64, delta1: f64, delta2: f64, epsilon: f64, preserving: bool) -> Self {
        AbstractionParams::derive(l, m, tau, tau * tau, tau, delta1, delta2, epsilon, preserving)
    }

    pub fn margin_ok(&self) -> bool {
        self.margin.is_some_and(|m| m < self.delta2)
    }

    pub fn epsilon_ok(&self) -> bool {
        self.eps1 + self.eps2 <= self.epsilon
    }

    /// Checks every invariant against the constants `L`, `M`. A zero period
    /// has no margin and is accepted as a degenerate abstraction.
    pub fn validate(&self, l: f64, m: f64) -> Result<(), AbsError> {
        let fin = [self.tau, self.eta, self.mu, self.delta1, self.delta2, self.epsilon];
        if fin.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AbsError::Precondition(
                "τ, η, μ, δ1, δ2, ε must be finite and non-negative".into(),
            ));
        }
        if self.eta <= 0.0 {
            return Err(AbsError::Precondition("η must be positive".into()));
        }
        let expect = AbstractionParams::derive(
            l,
            m,
            self.tau,
            self.eta,
            self.mu,
            self.delta1,
            self.delta2,
            self.epsilon,
            self.preserving,
        );
        if expect.radius != self.radius || expect.eps1 != self.eps1 || expect.eps2 != self.eps2 {
            return Err(AbsError::Infeasible(
                "radius or strengthening margins are inconsistent with L, M".into(),
            ));
        }
        if self.tau > 0.0 && !self.margin_ok() {
            return Err(AbsError::Infeasible(format!(
                "margin {:e} is not below δ2 = {}",
                self.margin.unwrap_or(f64::NAN),
                self.delta2
            )));
        }
        if !self.epsilon_ok() {
            return Err(AbsError::Infeasible(format!(
                "ε1 + ε2 = {:e} exceeds ε = {}",
                self.eps1 + self.eps2,
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Largest period tried by [`choose_parameters`].
pub const TAU_CEILING: f64 = 1.0;
/// Smallest period tried before giving up.
pub const TAU_FLOOR: f64 = 1e-9;

/// Picks the largest `τ` (up to a factor 2, then refined by bisection) for
/// which the scheduled parameters satisfy both the margin and the
/// strengthening budget.
pub fn choose_parameters(
    l: f64,
    m: f64,
    delta1: f64,
    delta2: f64,
    epsilon: f64,
    preserving: bool,
) -> Result<AbstractionParams, AbsError> {
    if !(delta1 >= 0.0 && delta2 > delta1) {
        return Err(AbsError::Precondition(format!(
            "need δ2 > δ1 ≥ 0, got δ1 = {delta1}, δ2 = {delta2}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(AbsError::Precondition(format!("need ε > 0, got {epsilon}")));
    }
    let at = |tau: f64| AbstractionParams::scheduled(l, m, tau, delta1, delta2, epsilon, preserving);
    let ok = |p: &AbstractionParams| p.margin_ok() && p.epsilon_ok();

    let mut tau = TAU_CEILING;
    let mut p = at(tau);
    if ok(&p) {
        return Ok(p);
    }
    while !ok(&p) {
        tau *= 0.5;
        if tau < TAU_FLOOR {
            return Err(AbsError::NoFeasiblePeriod {
                tau_floor: TAU_FLOOR,
                margin: p.margin.unwrap_or(f64::NAN),
                delta2,
                eps_sum: p.eps1 + p.eps2,
                epsilon,
            });
        }
        p = at(tau);
    }
    let (mut lo, mut hi) = (tau, 2.0 * tau);
    while hi - lo > 1e-7 * lo {
        let mid = 0.5 * (lo + hi);
        if ok(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(lo))
}

/// `(δ2_min, ε_min)` at a period, under the default schedule and a
/// proposition-preserving partition.
pub fn min_delta2_for_tau(l: f64, m: f64, tau: f64, delta1: f64) -> Result<(f64, f64), AbsError> {
    let d2 = margin_lhs(tau * tau, tau, tau, delta1, l, m)
        .map_err(|e| AbsError::Precondition(e.to_string()))?;
    // closed form of ε1 + ε2 with preserving cells, kept in one expression so
    // sweep rows are bit-reproducible from their own columns
    Ok((d2, (2.0 * m + delta1 + d2) * tau / 2.0))
}

/// Largest period mismatch `r*` with `r/(τ* − r) + δ1 < δ2` for `|r| ≤ r*`,
/// shrunk by 1% for a strict margin.
pub fn dwell_mismatch_bound(tau_star: f64, delta1: f64, delta2: f64) -> Result<f64, AbsError> {
    if !(tau_star > 0.0) || !(delta1 >= 0.0 && delta2 > delta1) {
        return Err(AbsError::Precondition(format!(
            "need τ* > 0 and δ2 > δ1 ≥ 0, got τ* = {tau_star}, δ1 = {delta1}, δ2 = {delta2}"
        )));
    }
    let gap = delta2 - delta1;
    Ok(0.99 * gap * tau_star / (1.0 + gap))
}

/// Grid abstraction with an implicit successor relation.
#[derive(Debug, Clone)]
pub struct FiniteAbstraction {
    sys: SystemSpec,
    params: AbstractionParams,
    states: Grid,
    controls: Grid,
    /// Distance from the Euler endpoint that concrete successors can reach.
    reach: f64,
}

/// Default cap on the number of grid cells.
pub const DEFAULT_MAX_CELLS: usize = 1_000_000;

impl FiniteAbstraction {
    pub fn build(sys: &SystemSpec, params: AbstractionParams, max_cells: usize) -> Result<Self, AbsError> {
        params.validate(sys.lipschitz, sys.bound)?;
        if let Some(axis) = (0..sys.n()).find(|&i| sys.state_box.lower[i] == sys.state_box.upper[i]) {
            return Err(AbsError::Precondition(format!("state box is flat along axis {axis}")));
        }
        let states = Grid::new(sys.state_box.clone(), params.eta)?;
        states.check_size(max_cells)?;
        if states.counts().iter().any(|&c| c >= u16::MAX as usize) {
            return Err(AbsError::Precondition(format!(
                "more than {} cells along one axis",
                u16::MAX - 1
            )));
        }
        let controls = if params.mu > 0.0 {
            Grid::new(sys.control_box.clone(), params.mu)?
        } else if sys.control_box.is_degenerate() {
            Grid::new(sys.control_box.clone(), 1.0)?
        } else {
            return Err(AbsError::Precondition(
                "μ = 0 requires a single-point control box".into(),
            ));
        };
        controls.check_size(max_cells)?;
        let reach = params.radius - 0.5 * params.eta;
        Ok(FiniteAbstraction {
            sys: sys.clone(),
            params,
            states,
            controls,
            reach,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn params(&self) -> &AbstractionParams {
        &self.params
    }

    pub fn states(&self) -> &Grid {
        &self.states
    }

    pub fn controls(&self) -> &Grid {
        &self.controls
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.controls.len()
    }

    pub fn state(&self, q: usize) -> Vec<f64> {
        self.states.representative_flat(q)
    }

    /// Concrete control applied for action `a`.
    pub fn action(&self, a: usize) -> Vec<f64> {
        self.controls.representative_flat(a)
    }

    pub fn endpoint(&self, q: usize, a: usize) -> Result<Vec<f64>, ExprError> {
        let x = self.state(q);
        let f = self.sys.eval_vector_field(&x, &self.action(a))?;
        Ok(x.iter().zip(&f).map(|(x, f)| x + self.params.tau * f).collect())
    }

    /// Successor cells of `(q, a)` as a box of indices, or `None` when the
    /// pair is blocked: the states it can reach within one period are not
    /// guaranteed to stay in `X`.
    pub fn post(&self, q: usize, a: usize) -> Result<Option<CellRange>, ExprError> {
        let mut scratch = Vec::new();
        let mut f = vec![0.0; self.sys.n()];
        let x = self.state(q);
        self.post_with(&x, &self.action(a), &mut f, &mut scratch)
    }

    fn post_with(
        &self,
        x: &[f64],
        u: &[f64],
        f: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> Result<Option<CellRange>, ExprError> {
        let xb = &self.sys.state_box;
        let half = 0.5 * self.params.eta;
        if !xb.contains_ball(x, half) {
            return Ok(None);
        }
        self.sys.field_into(x, u, f, scratch)?;
        for (fi, xi) in f.iter_mut().zip(x) {
            *fi = xi + self.params.tau * *fi;
        }
        if !xb.contains_ball(f, self.reach) {
            return Ok(None);
        }
        // Ties decided by rounding go to inclusion.
        Ok(self
            .states
            .near_representatives(f, self.params.radius * (1.0 + 1e-12)))
    }

    /// Flat successor indices of `(q, a)`; empty when blocked.
    pub fn successors(&self, q: usize, a: usize) -> Result<Vec<usize>, ExprError> {
        Ok(self
            .post(q, a)?
            .map(|r| self.states.expand(&r))
            .unwrap_or_default())
    }

    /// Materializes every successor box.
    pub fn table(&self, exec: Exec) -> Result<SuccessorTable, AbsError> {
        let n = self.sys.n();
        let na = self.num_actions();
        let actions: Vec<Vec<f64>> = (0..na).map(|a| self.action(a)).collect();
        let width = na * 2 * n;
        let mut data = vec![0u16; self.num_states() * width];
        let errors = std::sync::Mutex::new(None);
        exec.fill_rows(&mut data, width, |q, row| {
            let x = self.state(q);
            let mut f = vec![0.0; n];
            let mut scratch = Vec::with_capacity(n + self.sys.m());
            for (a, u) in actions.iter().enumerate() {
                let slot = &mut row[a * 2 * n..(a + 1) * 2 * n];
                match self.post_with(&x, u, &mut f, &mut scratch) {
                    Ok(Some(r)) => {
                        for i in 0..n {
                            slot[i] = r.lo[i] as u16;
                            slot[n + i] = r.hi[i] as u16;
                        }
                    }
                    Ok(None) => slot.fill(BLOCKED),
                    Err(e) => {
                        slot.fill(BLOCKED);
                        errors.lock().expect("poisoned").get_or_insert(e);
                    }
                }
            }
        });
        if let Some(e) = errors.into_inner().expect("poisoned") {
            return Err(AbsError::Expr(e));
        }
        Ok(SuccessorTable {
            counts: self.states.counts().to_vec(),
            strides: self.states.strides().to_vec(),
            num_actions: na,
            data,
        })
    }
}

const BLOCKED: u16 = u16::MAX;

/// Every successor box of an abstraction, stored as `u16` index bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SuccessorTable {
    counts: Vec<usize>,
    strides: Vec<usize>,
    num_actions: usize,
    /// Per `(q, a)`: `n` lower then `n` upper bounds.
    data: Vec<u16>,
}

impl SuccessorTable {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_states(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `(lower, upper)` inclusive bounds, or `None` if blocked.
    pub fn range(&self, q: usize, a: usize) -> Option<(&[u16], &[u16])> {
        let n = self.dim();
        let at = (q * self.num_actions + a) * 2 * n;
        let slot = &self.data[at..at + 2 * n];
        (slot[0] != BLOCKED).then(|| slot.split_at(n))
    }

    pub fn is_blocked(&self, q: usize, a: usize) -> bool {
        self.range(q, a).is_none()
    }

    pub fn blocked_pairs(&self) -> usize {
        (0..self.num_states())
            .map(|q| (0..self.num_actions).filter(|&a| self.is_blocked(q, a)).count())
            .sum()
    }

    pub fn successors(&self, q: usize, a: usize) -> Vec<usize> {
        let Some((lo, hi)) = self.range(q, a) else {
            return Vec::new();
        };
        let n = self.dim();
        let mut out = Vec::new();
        let mut idx: Vec<usize> = lo.iter().map(|&v| v as usize).collect();
        loop {
            out.push(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum());
            let mut ax = n;
            loop {
                if ax == 0 {
                    return out;
                }
                ax -= 1;
                if idx[ax] < hi[ax] as usize {
                    idx[ax] += 1;
                    break;
                }
                idx[ax] = lo[ax] as usize;
            }
        }
    }

    /// Order-sensitive digest of the whole relation.
    pub fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }
}

/// Affine scalar dynamics `ẋ = k x + b·u + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarAffine {
    pub k: f64,
    pub b: Vec<f64>,
    pub c: f64,
}

impl ScalarAffine {
    /// Recovers `k`, `b`, `c` by probing `f`, then verifies the fit on a
    /// spread of points.
    pub fn detect(sys: &SystemSpec) -> Result<Self, AbsError> {
        if sys.n() != 1 {
            return Err(AbsError::NotAffine(format!("state dimension is {}", sys.n())));
        }
        let m = sys.m();
        let f = |x: f64, u: &[f64]| -> Result<f64, AbsError> { Ok(sys.eval_vector_field(&[x], u)?[0]) };
        let zero = vec![0.0; m];
        let c = f(0.0, &zero)?;
        let k = f(1.0, &zero)? - c;
        let b: Vec<f64> = (0..m)
            .map(|j| {
                let mut e = zero.clone();
                e[j] = 1.0;
                Ok(f(0.0, &e)? - c)
            })
            .collect::<Result<_, AbsError>>()?;
        let aff = ScalarAffine { k, b, c };
        let (xb, ub) = (&sys.state_box, &sys.control_box);
        for s in 0..9 {
            let t = s as f64 / 8.0;
            let x = xb.lower[0] + t * (xb.upper[0] - xb.lower[0]);
            let u: Vec<f64> = (0..m)
                .map(|j| {
                    let tj = ((s * (j + 3)) % 9) as f64 / 8.0;
                    ub.lower[j] + tj * (ub.upper[j] - ub.lower[j])
                })
                .collect();
            let got = f(x, &u)?;
            let want = aff.eval(x, &u);
            let scale = 1.0 + got.abs().max(want.abs()) + x.abs();
            if (got - want).abs() > 1e-9 * scale {
                return Err(AbsError::NotAffine(format!(
                    "f({x}, {u:?}) = {got} but the affine fit gives {want}"
                )));
            }
        }
        Ok(aff)
    }

    pub fn eval(&self, x: f64, u: &[f64]) -> f64 {
        self.k * x + self.b.iter().zip(u).map(|(b, u)| b * u).sum::<f64>() + self.c
    }

    /// Exact reachable interval after `τ` from `[xl, xh]` under input drift
    /// `[dl, dh]` (control term plus disturbance, held constant).
    fn flow(&self, tau: f64, xl: f64, xh: f64, dl: f64, dh: f64) -> (f64, f64) {
        let e = (self.k * tau).exp();
        let p = phi1(self.k, tau);
        (e * xl + dl * p, e * xh + dh * p)
    }

    /// Range of `b·u + c` over a box of controls.
    fn drift(&self, ub: &Bounds) -> (f64, f64) {
        let mut lo = self.c;
        let mut hi = self.c;
        for (j, b) in self.b.iter().enumerate() {
            let (p, q) = (b * ub.lower[j], b * ub.upper[j]);
            lo += p.min(q);
            hi += p.max(q);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichWitness {
    pub state: usize,
    pub action: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub pairs_checked: usize,
    pub pairs_blocked: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// First few violations of either kind.
    pub witnesses: Vec<SandwichWitness>,
}

impl SandwichReport {
    pub fn lower_ok(&self) -> bool {
        self.lower_violations == 0
    }

    pub fn upper_ok(&self) -> bool {
        self.upper_violations == 0
    }

    pub fn passed(&self) -> bool {
        self.lower_ok() && self.upper_ok()
    }
}

const MAX_WITNESSES: usize = 16;

/// Checks a 1-D affine abstraction against exact reachable intervals.
///
/// Lower direction: every cell related to a state reachable under `δ1`
/// (with the action's control applied exactly) is a successor. Upper
/// direction: every state related to a successor is reachable under `δ2`
/// from every state of the source cell, for every control in the action's
/// cell.
pub fn check_sandwich(abs: &FiniteAbstraction, delta2: f64) -> Result<SandwichReport, AbsError> {
    let sys = abs.system();
    let aff = ScalarAffine::detect(sys)?;
    let p = abs.params();
    let (tau, half) = (p.tau, 0.5 * p.eta);
    let pd = phi1(aff.k, tau);
    let (xl_box, xh_box) = (sys.state_box.lower[0], sys.state_box.upper[0]);
    let states = abs.states();
    let mut report = SandwichReport::default();
    for a in 0..abs.num_actions() {
        let u = abs.action(a);
        let ucell = abs.controls().cell_box_clipped(&abs.controls().unflatten(a));
        let (dl, dh) = aff.drift(&ucell);
        let exact = aff.eval(0.0, &u);
        for q in 0..abs.num_states() {
            report.pairs_checked += 1;
            let Some(range) = abs.post(q, a)? else {
                report.pairs_blocked += 1;
                continue;
            };
            let (lo, hi) = (range.lo[0], range.hi[0]);
            let cell = states.cell_box_clipped(&[q]);
            let (cl, ch) = (cell.lower[0], cell.upper[0]);

            // Lower: exact δ1 image of the whole cell with u applied exactly.
            let (rl, rh) = aff.flow(tau, cl, ch, exact - p.delta1, exact + p.delta1);
            let (rl, rh) = (rl.max(xl_box), rh.min(xh_box));
            if rl <= rh {
                let related = states
                    .near_representatives(&[0.5 * (rl + rh)], 0.5 * (rh - rl) + half)
                    .map(|r| (r.lo[0], r.hi[0]));
                if let Some((need_lo, need_hi)) = related {
                    if need_lo < lo || need_hi > hi {
                        report.lower_violations += 1;
                        if report.witnesses.len() < MAX_WITNESSES {
                            report.witnesses.push(SandwichWitness {
                                state: q,
                                action: a,
                                detail: format!(
                                    "lower: δ1-reachable [{rl}, {rh}] meets cells {need_lo}..={need_hi}, \
                                     successors are {lo}..={hi}"
                                ),
                            });
                        }
                    }
                }
            }

            // Upper: the successor union must be reachable from every start.
            let sl = (states.axis_rep(0, lo) - half).max(xl_box);
            let sh = (states.axis_rep(0, hi) + half).min(xh_box);
            let e = (aff.k * tau).exp();
            // Intersection over starting states x ∈ [cl, ch] and drifts.
            let need_lo = e * ch + (dh - delta2) * pd;
            let need_hi = e * cl + (dl + delta2) * pd;
            if sl < need_lo || sh > need_hi {
                report.upper_violations += 1;
                if report.witnesses.len() < MAX_WITNESSES {
                    let bad = if sl < need_lo { lo } else { hi };
                    report.witnesses.push(SandwichWitness {
                        state: q,
                        action: a,
                        detail: format!(
                            "upper: successor cell {bad} reaches outside the δ2-reachable \
                             [{need_lo}, {need_hi}] (successor span [{sl}, {sh}])"
                        ),
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
// oracle values keep every digit they were computed with
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::geometry::Bounds;
    use proptest::prelude::*;

    const CAR_L: f64 = 1.2674;
    const CAR_M: f64 = 1.5574;

    fn identity_1d(u: (f64, f64)) -> SystemSpec {
        SystemSpec::from_strings(
            &["x"],
            &["u"],
            &["u"],
            Bounds::interval(0.0, 1.0).unwrap(),
            Bounds::interval(u.0, u.1).unwrap(),
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn affine(k: f64) -> SystemSpec {
        SystemSpec::from_strings(
            &["x"],
            &["u"],
            &[&format!("{k:?}*x + u")],
            Bounds::interval(0.0, 1.0).unwrap(),
            Bounds::interval(-1.0, 1.0).unwrap(),
            k.abs().max(1.0),
            k.abs() + 1.0,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_successors() {
        let sys = identity_1d((1.0, 1.0));
        let p = AbstractionParams::derive(1.0, 1.0, 0.1, 0.05, 0.0, 0.0, 2.0, 1.0, false);
        let abs = FiniteAbstraction::build(&sys, p.clone(), DEFAULT_MAX_CELLS).unwrap();
        assert_eq!(abs.num_states(), 20);
        assert_eq!(abs.num_actions(), 1);
        assert!((p.radius - 0.057800191027538819).abs() < 1e-15);
        let succ = abs.successors(0, 0).unwrap();
        let centers: Vec<f64> = succ.iter().map(|&q| abs.state(q)[0]).collect();
        let expect = [0.075, 0.125, 0.175];
        assert_eq!(centers.len(), 3);
        for (c, e) in centers.iter().zip(expect) {
            assert!((c - e).abs() < 1e-12);
        }
        // brute-force scan over all cells against the relation
        let end = abs.endpoint(0, 0).unwrap()[0];
        let brute: Vec<usize> = (0..20)
            .filter(|&q| (abs.state(q)[0] - end).abs() <= p.radius)
            .collect();
        assert_eq!(succ, brute);
        // q = 0.975 pushed out by u = 1
        assert_eq!(abs.post(19, 0).unwrap(), None);
    }

    #[test]
    fn zero_period_keeps_neighbours() {
        let sys = identity_1d((-1.0, 1.0));
        let p = AbstractionParams::derive(1.0, 1.0, 0.0, 0.1, 0.5, 0.2, 0.3, 1.0, false);
        assert_eq!(p.radius, 0.1);
        let abs = FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS).unwrap();
        for a in 0..abs.num_actions() {
            assert_eq!(abs.successors(4, a).unwrap(), vec![3, 4, 5]);
        }
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let sys = identity_1d((-1.0, 1.0));
        let p = AbstractionParams::derive(1.0, 1.0, 0.1, 0.05, 0.1, 0.0, 0.5, 1.0, false);
        assert!(matches!(
            FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS),
            Err(AbsError::Infeasible(_))
        ));
        let p = AbstractionParams::derive(1.0, 1.0, 0.01, 1e-4, 0.01, 0.0, 0.5, 1.0, false);
        assert!(matches!(
            FiniteAbstraction::build(&sys, p.clone(), 1000),
            Err(AbsError::Geometry(GeometryError::TooLarge { .. }))
        ));
        assert!(FiniteAbstraction::build(&sys, p.clone(), 10_000).is_ok());
        let mut tampered = p;
        tampered.radius *= 0.5;
        assert!(FiniteAbstraction::build(&sys, tampered, 10_000).is_err());
    }

    #[test]
    fn choose_parameters_examples() {
        for preserving in [false, true] {
            let p = choose_parameters(CAR_L, CAR_M, 0.0, 0.1, 0.05, preserving).unwrap();
            assert!(p.margin_ok() && p.epsilon_ok());
            assert!(p.tau <= 0.019 && p.tau > 0.0184, "{}", p.tau);
            assert!((p.tau - 0.018453009578344042).abs() < 1e-7 * 0.0185);
            p.validate(CAR_L, CAR_M).unwrap();
        }
        let p = choose_parameters(CAR_L, CAR_M, 0.0, 0.5, 0.2, false).unwrap();
        assert!((p.tau - 0.08244946072185591).abs() < 1e-7 * 0.0825);
        let p = choose_parameters(CAR_L, CAR_M, 0.0, 1e9, 1e9, false).unwrap();
        assert_eq!(p.tau, TAU_CEILING);
        assert!(matches!(
            choose_parameters(CAR_L, CAR_M, 0.05, 0.0499, 0.1, false),
            Err(AbsError::Precondition(_))
        ));
        assert!(choose_parameters(CAR_L, CAR_M, 0.0, 0.1, 0.0, false).is_err());
    }

    #[test]
    fn choose_parameters_floor_reports_diagnostics() {
        // Any δ2 > δ1 is eventually feasible; a huge M with a tiny budget
        // pushes τ below the floor.
        let err = choose_parameters(1.0, 1e12, 0.0, 1.0, 1e-12, true).unwrap_err();
        assert!(matches!(err, AbsError::NoFeasiblePeriod { .. }), "{err}");
    }

    #[test]
    fn min_delta2_examples() {
        let (d2, e) = min_delta2_for_tau(CAR_L, CAR_M, 0.2, 0.0).unwrap();
        assert!((d2 - 1.4747852556707214).abs() < 1e-13);
        assert!((e - 0.45895852556707214).abs() < 1e-13);
        let (d2, _) = min_delta2_for_tau(CAR_L, CAR_M, 1e-6, 0.0).unwrap();
        assert!(d2 < 1e-5);
        let (d2, _) = min_delta2_for_tau(CAR_L, CAR_M, 1e-6, 0.3).unwrap();
        assert!((d2 - 0.3).abs() < 1e-5);
        let mut prev = 0.0;
        for k in 0..50 {
            let tau = 1e-3 * 200f64.powf(k as f64 / 49.0);
            let (d2, _) = min_delta2_for_tau(CAR_L, CAR_M, tau, 0.0).unwrap();
            assert!(d2 > prev);
            prev = d2;
        }
        assert!(min_delta2_for_tau(CAR_L, CAR_M, 0.0, 0.0).is_err());
    }

    #[test]
    fn dwell_mismatch_examples() {
        let r = dwell_mismatch_bound(1.0, 0.0, 1.0).unwrap();
        assert!((r - 0.495).abs() < 1e-15);
        assert!(r / (1.0 - r) < 1.0);
        let r = dwell_mismatch_bound(2.0, 0.1, 0.2).unwrap();
        assert!((r - 0.18).abs() < 1e-12);
        assert!(r / (2.0 - r) + 0.1 < 0.2);
        assert!(dwell_mismatch_bound(1.0, 0.3, 0.3 + 1e-12).unwrap() < 1e-11);
        assert!(dwell_mismatch_bound(1.0, 0.2, 0.1).is_err());
        assert!(dwell_mismatch_bound(0.0, 0.0, 0.1).is_err());
    }

    fn feasible_affine(k: f64, tau: f64) -> FiniteAbstraction {
        let sys = affine(k);
        let (l, m) = (sys.lipschitz, sys.bound);
        let mut p = AbstractionParams::scheduled(l, m, tau, 0.05, 0.0, 10.0, false);
        p.delta2 = p.margin.unwrap() * 1.01;
        p = AbstractionParams::derive(l, m, tau, p.eta, p.mu, 0.05, p.delta2, 10.0, false);
        FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS).unwrap()
    }

    #[test]
    fn sandwich_examples() {
        // identity dynamics with a single action u = 1
        let sys = identity_1d((1.0, 1.0));
        let p = AbstractionParams::derive(1.0, 1.0, 0.1, 0.01, 0.0, 0.0, 0.5, 10.0, false);
        let abs = FiniteAbstraction::build(&sys, p.clone(), DEFAULT_MAX_CELLS).unwrap();
        let rep = check_sandwich(&abs, p.delta2).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.pairs_blocked > 0 && rep.pairs_blocked < rep.pairs_checked);

        let abs = feasible_affine(-1.0, 0.05);
        let d2 = abs.params().delta2;
        let rep = check_sandwich(&abs, d2).unwrap();
        assert!(rep.passed(), "{rep:?}");

        let margin = abs.params().margin.unwrap();
        let rep = check_sandwich(&abs, 0.25 * margin).unwrap();
        assert!(rep.lower_ok());
        assert!(!rep.upper_ok());
        assert!(!rep.witnesses.is_empty());
    }

    #[test]
    fn sandwich_rejects_nonaffine() {
        let sys = SystemSpec::from_strings(
            &["x"],
            &["u"],
            &["x*x + u"],
            Bounds::interval(0.0, 1.0).unwrap(),
            Bounds::interval(-1.0, 1.0).unwrap(),
            3.0,
            2.0,
        )
        .unwrap();
        let p = AbstractionParams::derive(3.0, 2.0, 0.0, 0.1, 0.5, 0.0, 1.0, 1.0, false);
        let abs = FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS).unwrap();
        assert!(matches!(check_sandwich(&abs, 1.0), Err(AbsError::NotAffine(_))));
    }

    #[test]
    fn table_agrees_with_lazy_post_and_is_deterministic() {
        let abs = feasible_affine(0.7, 0.04);
        let seq = abs.table(Exec::Sequential).unwrap();
        let par = abs.table(Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.digest(), abs.table(Exec::Parallel).unwrap().digest());
        for q in 0..abs.num_states() {
            for a in 0..abs.num_actions() {
                assert_eq!(seq.successors(q, a), abs.successors(q, a).unwrap());
            }
        }
        assert!(seq.blocked_pairs() > 0);
    }

    #[test]
    fn car_abstraction_small() {
        let car = crate::system::car();
        let sys = SystemSpec::new(
            car.state_names.clone(),
            car.control_names.clone(),
            car.dynamics.clone(),
            Bounds::new(vec![0.0, 0.0, -0.15], vec![0.3, 0.3, 0.15]).unwrap(),
            Bounds::new(vec![0.8, -0.1], vec![1.0, 0.1]).unwrap(),
            CAR_L,
            CAR_M,
        )
        .unwrap();
        let p = choose_parameters(CAR_L, CAR_M, 0.0, 0.5, 0.2, false).unwrap();
        let abs = FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS).unwrap();
        let t = abs.table(Exec::Parallel).unwrap();
        assert_eq!(abs.num_actions(), 9);
        let free = abs.num_states() * abs.num_actions() - t.blocked_pairs();
        assert!(free > abs.num_states(), "{free}");
    }

    proptest! {
        #[test]
        fn enlarging_delta1_never_removes_successors(
            k in -1.5f64..1.5,
            tau in 0.02f64..0.08,
            d1 in 0.0f64..0.2,
            bump in 0.0f64..0.2,
        ) {
            let sys = affine(k);
            let (l, m) = (sys.lipschitz, sys.bound);
            let mk = |d: f64| {
                let p = AbstractionParams::scheduled(l, m, tau, d, 100.0, 100.0, false);
                FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS).unwrap()
            };
            let (small, big) = (mk(d1), mk(d1 + bump));
            let (ts, tb) = (small.table(Exec::Sequential).unwrap(), big.table(Exec::Sequential).unwrap());
            for q in 0..small.num_states() {
                for a in 0..small.num_actions() {
                    if tb.is_blocked(q, a) {
                        continue;
                    }
                    let sb = tb.successors(q, a);
                    prop_assert!(ts.successors(q, a).iter().all(|s| sb.contains(s)));
                }
            }
        }

        #[test]
        fn sandwich_passes_on_random_affine_instances(
            k in -2.0f64..2.0,
            tau in 0.01f64..0.1,
            mu_scale in 0.5f64..2.0,
        ) {
            let sys = affine(k);
            let (l, m) = (sys.lipschitz, sys.bound);
            let (eta, mu) = (tau * tau, tau * mu_scale);
            let margin = margin_lhs(eta, mu, tau, 0.05, l, m).unwrap();
            let p = AbstractionParams::derive(l, m, tau, eta, mu, 0.05, margin * 1.001, 10.0, false);
            let abs = FiniteAbstraction::build(&sys, p, DEFAULT_MAX_CELLS).unwrap();
            let rep = check_sandwich(&abs, abs.params().delta2).unwrap();
            prop_assert!(rep.passed(), "{:?}", rep.witnesses);
        }
    }
}
