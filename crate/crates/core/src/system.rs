//! System descriptions, the Gronwall transition radius, the feasibility
//! margin, and perturbed sampled-data integration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expression, BoundExpr, ExprError, Expression};
use crate::geometry::{Bounds, Norm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("expected {expected} dynamics expressions (one per state), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("{what} box has dimension {got}, expected {expected}")]
    BoxDimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("dynamics component {index} uses undeclared variable `{name}`")]
    Undeclared { index: usize, name: String },
    #[error("constant {name} must be finite and non-negative, got {value}")]
    Constant { name: &'static str, value: f64 },
    #[error("dynamics component {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ExprError,
    },
    #[error("margin requires a positive sampling period, got {0}")]
    ZeroPeriod(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite state at sub-step {substep}")]
    NonFinite { substep: usize },
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error("initial state {0:?} is outside the state box")]
    StartOutside(Vec<f64>),
    #[error("invalid simulation input: {0}")]
    Input(String),
}

/// `f`, `X`, `U` and the constants `L`, `M` of a control system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub state_names: Vec<String>,
    pub control_names: Vec<String>,
    pub dynamics: Vec<Expression>,
    pub state_box: Bounds,
    pub control_box: Bounds,
    /// Lipschitz constant of `f` in both arguments.
    pub lipschitz: f64,
    /// Bound on `|f|` over `X × U`.
    pub bound: f64,
    #[serde(default)]
    pub norm: Norm,
    #[serde(skip)]
    compiled: Vec<BoundExpr>,
}

impl SystemSpec {
    pub fn new(
        state_names: Vec<String>,
        control_names: Vec<String>,
        dynamics: Vec<Expression>,
        state_box: Bounds,
        control_box: Bounds,
        lipschitz: f64,
        bound: f64,
    ) -> Result<Self, SystemError> {
        let n = state_names.len();
        if dynamics.len() != n {
            return Err(SystemError::Arity {
                expected: n,
                got: dynamics.len(),
            });
        }
        if state_box.dim() != n {
            return Err(SystemError::BoxDimension {
                what: "state",
                expected: n,
                got: state_box.dim(),
            });
        }
        if control_box.dim() != control_names.len() {
            return Err(SystemError::BoxDimension {
                what: "control",
                expected: control_names.len(),
                got: control_box.dim(),
            });
        }
        let slots: Vec<String> = state_names.iter().chain(&control_names).cloned().collect();
        for (i, name) in slots.iter().enumerate() {
            if slots[..i].contains(name) {
                return Err(SystemError::DuplicateName(name.clone()));
            }
        }
        for (name, value) in [("L", lipschitz), ("M", bound)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SystemError::Constant { name, value });
            }
        }
        let mut compiled = Vec::with_capacity(n);
        for (index, e) in dynamics.iter().enumerate() {
            if let Some(name) = e.variables().into_iter().find(|v| !slots.iter().any(|s| s == v)) {
                return Err(SystemError::Undeclared {
                    index,
                    name: name.to_string(),
                });
            }
            compiled.push(e.bind(&slots).expect("variables checked above"));
        }
        Ok(SystemSpec {
            state_names,
            control_names,
            dynamics,
            state_box,
            control_box,
            lipschitz,
            bound,
            norm: Norm::Infinity,
            compiled,
        })
    }

    /// Parses each component of `f` from text.
    pub fn from_strings(
        state_names: &[&str],
        control_names: &[&str],
        dynamics: &[&str],
        state_box: Bounds,
        control_box: Bounds,
        lipschitz: f64,
        bound: f64,
    ) -> Result<Self, SystemError> {
        let exprs = dynamics
            .iter()
            .enumerate()
            .map(|(index, s)| parse_expression(s).map_err(|source| SystemError::Parse { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        SystemSpec::new(
            state_names.iter().map(|s| s.to_string()).collect(),
            control_names.iter().map(|s| s.to_string()).collect(),
            exprs,
            state_box,
            control_box,
            lipschitz,
            bound,
        )
    }

    /// Rebuilds the slot-bound expressions, e.g. after deserialization.
    pub fn recompile(self) -> Result<Self, SystemError> {
        SystemSpec::new(
            self.state_names,
            self.control_names,
            self.dynamics,
            self.state_box,
            self.control_box,
            self.lipschitz,
            self.bound,
        )
    }

    pub fn n(&self) -> usize {
        self.state_names.len()
    }

    pub fn m(&self) -> usize {
        self.control_names.len()
    }

    /// Writes `f(x, u)` into `out`. `scratch` holds at least `n + m` values.
    pub fn field_into(
        &self,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> Result<(), ExprError> {
        scratch.clear();
        scratch.extend_from_slice(x);
        scratch.extend_from_slice(u);
        for (index, (e, o)) in self.compiled.iter().zip(out.iter_mut()).enumerate() {
            *o = e.eval_slots(scratch).map_err(|err| ExprError::Component {
                index,
                source: Box::new(err),
            })?;
        }
        Ok(())
    }

    /// `f(x, u)`.
    pub fn eval_vector_field(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ExprError> {
        assert_eq!(x.len(), self.n(), "state dimension");
        assert_eq!(u.len(), self.m(), "control dimension");
        let mut out = vec![0.0; self.n()];
        self.field_into(x, u, &mut out, &mut Vec::with_capacity(self.n() + self.m()))?;
        Ok(out)
    }

    /// Samples `f` and reports any violation of the declared `L` and `M`.
    /// The constants are the user's responsibility, so this only warns.
    pub fn spot_check(&self, pairs: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut warnings = Vec::new();
        let tol = |v: f64| v * (1.0 + 1e-9) + 1e-12;
        let (mut worst_m, mut worst_lx, mut worst_lu) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..pairs {
            let x = sample_box(&mut rng, &self.state_box);
            let y = sample_box(&mut rng, &self.state_box);
            let u = sample_box(&mut rng, &self.control_box);
            let v = sample_box(&mut rng, &self.control_box);
            let (Ok(fxu), Ok(fyu), Ok(fxv)) = (
                self.eval_vector_field(&x, &u),
                self.eval_vector_field(&y, &u),
                self.eval_vector_field(&x, &v),
            ) else {
                warnings.push("dynamics failed to evaluate at a sampled point".to_string());
                continue;
            };
            let nm = self.norm;
            worst_m = worst_m.max(nm.norm(&fxu));
            let dx = nm.dist(&x, &y);
            if dx > 0.0 {
                worst_lx = worst_lx.max(nm.dist(&fxu, &fyu) / dx);
            }
            let du = nm.dist(&u, &v);
            if du > 0.0 {
                worst_lu = worst_lu.max(nm.dist(&fxu, &fxv) / du);
            }
        }
        if worst_m > tol(self.bound) {
            warnings.push(format!("sampled |f| reaches {worst_m:.6} > M = {}", self.bound));
        }
        if worst_lx > tol(self.lipschitz) {
            warnings.push(format!(
                "sampled Lipschitz quotient in x reaches {worst_lx:.6} > L = {}",
                self.lipschitz
            ));
        }
        if worst_lu > tol(self.lipschitz) {
            warnings.push(format!(
                "sampled Lipschitz quotient in u reaches {worst_lu:.6} > L = {}",
                self.lipschitz
            ));
        }
        warnings
    }
}

pub(crate) fn sample_box<R: Rng>(rng: &mut R, b: &Bounds) -> Vec<f64> {
    b.lower
        .iter()
        .zip(&b.upper)
        .map(|(&lo, &hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
        .collect()
}

/// `(e^{Lτ} − 1)/L`, equal to `τ` at `L = 0`.
pub fn phi1(l: f64, tau: f64) -> f64 {
    if l == 0.0 {
        tau
    } else {
        (l * tau).exp_m1() / l
    }
}

/// `(e^{Lτ} − Lτ − 1)/L`, equal to `0` at `L = 0`.
pub fn phi2(l: f64, tau: f64) -> f64 {
    let x = l * tau;
    if x.abs() < 0.1 {
        // τ·(x/2! + x²/3! + x³/4! + ...)
        let mut term = 0.5 * x;
        let mut sum = term;
        for k in 3..20 {
            term *= x / k as f64;
            sum += term;
            if term.abs() <= f64::EPSILON * sum.abs() {
                break;
            }
        }
        tau * sum
    } else {
        (x.exp_m1() - x) / l
    }
}

/// Transition radius of the grid abstraction: the distance from the Euler
/// endpoint `q + τ f(q, a)` within which abstract successors are kept.
pub fn gronwall_radius(eta: f64, mu: f64, tau: f64, delta1: f64, l: f64, m: f64) -> f64 {
    let e = (l * tau).exp();
    0.5 * eta
        + 0.5 * eta * e
        + delta1 * phi1(l, tau)
        + 0.5 * mu * (l * tau).exp_m1()
        + m * phi2(l, tau)
}

/// Left-hand side of the feasibility margin; feasible for `δ2` iff `< δ2`.
pub fn margin_lhs(
    eta: f64,
    mu: f64,
    tau: f64,
    delta1: f64,
    l: f64,
    m: f64,
) -> Result<f64, SystemError> {
    if !(tau > 0.0) {
        return Err(SystemError::ZeroPeriod(tau));
    }
    let e = (l * tau).exp();
    let inner = eta + eta * e + delta1 * phi1(l, tau) + mu * (l * tau).exp_m1() + 2.0 * m * phi2(l, tau);
    Ok(inner * (l + 1.0 / tau))
}

/// Maximum drift between a δ-perturbed trajectory and its nearest sampling
/// instant: `(M + δ)τ/2`.
pub fn intersample_bound(m: f64, delta: f64, tau: f64) -> f64 {
    (m + delta) * tau / 2.0
}

/// Dense output of a (piecewise) sampled-data run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Integration sub-step.
    pub h: f64,
    /// Sub-steps per sampling period.
    pub substeps: usize,
    /// Sample times, `t[k] = t0 + k h`.
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Control applied on each sampling period.
    pub controls: Vec<Vec<f64>>,
    /// Disturbance held on each sub-step.
    pub disturbances: Vec<Vec<f64>>,
    /// Set when the state left `X`; the offending sub-step is not recorded.
    pub exited: Option<usize>,
}

impl Trajectory {
    pub fn start(x0: Vec<f64>, h: f64, substeps: usize) -> Self {
        Trajectory {
            h,
            substeps,
            t: vec![0.0],
            x: vec![x0],
            controls: Vec::new(),
            disturbances: Vec::new(),
            exited: None,
        }
    }

    pub fn last(&self) -> &[f64] {
        self.x.last().expect("trajectory is never empty")
    }

    pub fn end_time(&self) -> f64 {
        *self.t.last().expect("trajectory is never empty")
    }

    /// States at the sampling instants.
    pub fn samples(&self) -> Vec<&[f64]> {
        self.x
            .iter()
            .step_by(self.substeps.max(1))
            .map(|v| v.as_slice())
            .collect()
    }

    /// Largest distance between a dense sample and the sampling instant
    /// nearest to it in time.
    pub fn max_intersample_deviation(&self, norm: Norm) -> f64 {
        let s = self.substeps.max(1);
        let mut worst = 0.0f64;
        for (k, x) in self.x.iter().enumerate() {
            let (period, j) = (k / s, k % s);
            let anchor = if 2 * j <= s { period * s } else { (period + 1) * s };
            if let Some(a) = self.x.get(anchor) {
                worst = worst.max(norm.dist(x, a));
            } else {
                // Truncated final period: only the start is available.
                worst = worst.max(norm.dist(x, &self.x[period * s]));
            }
        }
        worst
    }
}

/// One sampling period of `x' = f(x, u) + w`, recorded onto `traj`.
///
/// `w` is piecewise constant on sub-steps with each component drawn
/// uniformly from `[−δ, δ]`; integration is classical RK4. Returns `false`
/// if the state left `X` (the trajectory is then marked and stops growing).
pub fn integrate_period<R: Rng>(
    sys: &SystemSpec,
    traj: &mut Trajectory,
    u: &[f64],
    tau: f64,
    delta: f64,
    rng: &mut R,
) -> Result<bool, SimError> {
    let n = sys.n();
    let s = traj.substeps;
    let h = tau / s as f64;
    let mut scratch = Vec::with_capacity(n + sys.m());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut x = traj.last().to_vec();
    let t0 = traj.end_time();
    let base = traj.x.len() - 1;
    traj.controls.push(u.to_vec());
    for j in 0..s {
        let w: Vec<f64> = (0..n).map(|_| delta * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        sys.field_into(&x, u, &mut k1, &mut scratch)?;
        for i in 0..n {
            k1[i] += w[i];
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        sys.field_into(&stage, u, &mut k2, &mut scratch)?;
        for i in 0..n {
            k2[i] += w[i];
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        sys.field_into(&stage, u, &mut k3, &mut scratch)?;
        for i in 0..n {
            k3[i] += w[i];
            stage[i] = x[i] + h * k3[i];
        }
        sys.field_into(&stage, u, &mut k4, &mut scratch)?;
        for i in 0..n {
            k4[i] += w[i];
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        traj.disturbances.push(w);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                substep: base + j + 1,
            });
        }
        if !sys.state_box.contains(&x) {
            traj.exited = Some(base + j + 1);
            return Ok(false);
        }
        traj.t.push(t0 + (j + 1) as f64 * h);
        traj.x.push(x.clone());
    }
    Ok(true)
}

/// `simulate_step`: one perturbed sampling period from `x` under control `u`.
pub fn simulate_step(
    sys: &SystemSpec,
    x: &[f64],
    u: &[f64],
    tau: f64,
    delta: f64,
    substeps: usize,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if substeps == 0 {
        return Err(SimError::Input("substeps must be at least 1".into()));
    }
    if !(delta >= 0.0) || !(tau >= 0.0) {
        return Err(SimError::Input("τ and δ must be non-negative".into()));
    }
    if !sys.state_box.contains(x) {
        return Err(SimError::StartOutside(x.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::start(x.to_vec(), tau / substeps as f64, substeps);
    integrate_period(sys, &mut traj, u, tau, delta, &mut rng)?;
    Ok(traj)
}

/// Sampled estimates of `L` and `M`. These are lower bounds on the true
/// constants, not certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub lipschitz: f64,
    pub bound: f64,
    pub lipschitz_x: f64,
    pub lipschitz_u: f64,
    pub rigorous: bool,
}

impl std::fmt::Display for ConstantEstimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "NON-RIGOROUS estimate: L ≈ {:.6} (x: {:.6}, u: {:.6}), M ≈ {:.6}",
            self.lipschitz, self.lipschitz_x, self.lipschitz_u, self.bound
        )
    }
}

pub fn estimate_constants(
    sys: &SystemSpec,
    samples: usize,
    seed: u64,
) -> Result<ConstantEstimate, ExprError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nm = sys.norm;
    let (mut m, mut lx, mut lu) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples.max(2) {
        let x = sample_box(&mut rng, &sys.state_box);
        let y = sample_box(&mut rng, &sys.state_box);
        let u = sample_box(&mut rng, &sys.control_box);
        let v = sample_box(&mut rng, &sys.control_box);
        let fxu = sys.eval_vector_field(&x, &u)?;
        m = m.max(nm.norm(&fxu));
        let dx = nm.dist(&x, &y);
        if dx > 0.0 {
            lx = lx.max(nm.dist(&fxu, &sys.eval_vector_field(&y, &u)?) / dx);
        }
        let du = nm.dist(&u, &v);
        if du > 0.0 {
            lu = lu.max(nm.dist(&fxu, &sys.eval_vector_field(&x, &v)?) / du);
        }
    }
    Ok(ConstantEstimate {
        lipschitz: lx.max(lu),
        bound: m,
        lipschitz_x: lx,
        lipschitz_u: lu,
        rigorous: false,
    })
}

/// The kinematic car with bicycle steering, `a = 0.5`, `b = 1`, on
/// `X = [0,10]² × [−π, π]`, `U = [−1, 1]²`.
pub fn car() -> SystemSpec {
    let alpha = "atan(0.5*tan(phi)/1)";
    SystemSpec::from_strings(
        &["x", "y", "theta"],
        &["v", "phi"],
        &[
            &format!("v*cos({alpha}+theta)/cos({alpha})"),
            &format!("v*sin({alpha}+theta)/cos({alpha})"),
            "v*tan(phi)",
        ],
        Bounds::new(
            vec![0.0, 0.0, -std::f64::consts::PI],
            vec![10.0, 10.0, std::f64::consts::PI],
        )
        .expect("static box"),
        Bounds::new(vec![-1.0, -1.0], vec![1.0, 1.0]).expect("static box"),
        1.2674,
        1.5574,
    )
    .expect("static system")
}

#[cfg(test)]
// oracle values keep every digit they were computed with
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn identity_1d() -> SystemSpec {
        SystemSpec::from_strings(
            &["x"],
            &["u"],
            &["u"],
            Bounds::interval(0.0, 1.0).unwrap(),
            Bounds::interval(-1.0, 1.0).unwrap(),
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn affine(a: f64, x_box: (f64, f64)) -> SystemSpec {
        SystemSpec::from_strings(
            &["x"],
            &["u"],
            &[&format!("{a:?}*x + u")],
            Bounds::interval(x_box.0, x_box.1).unwrap(),
            Bounds::interval(-1.0, 1.0).unwrap(),
            a.abs().max(1.0),
            a.abs() * x_box.0.abs().max(x_box.1.abs()) + 1.0,
        )
        .unwrap()
    }

    #[test]
    fn car_field_examples() {
        let car = car();
        assert_eq!(car.eval_vector_field(&[0.0, 0.0, 0.0], &[1.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(car.eval_vector_field(&[0.0, 0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let id = identity_1d();
        for x in [0.0, 0.4, 1.0] {
            assert_eq!(id.eval_vector_field(&[x], &[0.3]).unwrap(), vec![0.3]);
        }
    }

    #[test]
    fn field_errors_carry_component() {
        let sys = SystemSpec::from_strings(
            &["x", "y"],
            &["u"],
            &["u", "1/x"],
            Bounds::new(vec![0.0; 2], vec![1.0; 2]).unwrap(),
            Bounds::interval(0.0, 1.0).unwrap(),
            1.0,
            1.0,
        )
        .unwrap();
        let err = sys.eval_vector_field(&[0.0, 0.0], &[0.5]).unwrap_err();
        assert!(matches!(err, ExprError::Component { index: 1, .. }));
    }

    #[test]
    fn construction_rejects_bad_specs() {
        let b = Bounds::interval(0.0, 1.0).unwrap();
        let mk = |names: &[&str], dyn_: &[&str], l: f64| {
            SystemSpec::from_strings(names, &["u"], dyn_, b.clone(), b.clone(), l, 1.0)
        };
        assert!(matches!(mk(&["x"], &["x + z"], 1.0), Err(SystemError::Undeclared { .. })));
        assert!(matches!(mk(&["u"], &["u"], 1.0), Err(SystemError::DuplicateName(_))));
        assert!(matches!(mk(&["x"], &["u", "u"], 1.0), Err(SystemError::Arity { .. })));
        assert!(matches!(mk(&["x"], &["u"], -1.0), Err(SystemError::Constant { .. })));
        assert!(matches!(mk(&["x"], &["2u"], 1.0), Err(SystemError::Parse { index: 0, .. })));
    }

    #[test]
    fn radius_examples() {
        let r = gronwall_radius(0.01, 0.1, 0.1, 0.0, 1.0, 1.0);
        assert!(rel(r, 0.020955318569808245) < 1e-14, "{r}");
        assert_eq!(gronwall_radius(0.01, 0.1, 0.0, 0.3, 1.0, 1.0), 0.01);
        let small = gronwall_radius(0.01, 0.1, 0.1, 0.2, 1e-8, 1.0);
        assert!(rel(small, 0.030000000115000002) < 1e-14, "{small}");
        let zero = gronwall_radius(0.01, 0.1, 0.1, 0.2, 0.0, 1.0);
        assert!((zero - 0.03).abs() < 1e-15);
        assert!(rel(small, zero) < 1e-6);
        let one_d = gronwall_radius(0.05, 0.0, 0.1, 0.0, 1.0, 1.0);
        assert!(rel(one_d, 0.057800191027538819) < 1e-14);
    }

    #[test]
    fn margin_examples() {
        let m = margin_lhs(0.04, 0.2, 0.2, 0.0, 1.2674, 1.5574).unwrap();
        assert!(rel(m, 1.4747852556707214) < 1e-14, "{m}");
        let t = 1e-6;
        let m = margin_lhs(0.0, 0.0, t, 0.0, 1.2674, 1.5574).unwrap();
        assert!(rel(m, 1.9738520955425456e-6) < 1e-9, "{m}");
        for (d1, want) in [
            (0.0, 0.00052422035304163101),
            (0.1, 0.10054323242395255761),
            (0.3, 0.30058125656577438304),
        ] {
            let t = 1e-4;
            let m = margin_lhs(t * t, t, t, d1, 1.2674, 1.5574).unwrap();
            assert!(rel(m, want) < 1e-12, "{d1}: {m}");
            assert!((m - d1).abs() < 1e-3);
        }
        assert_eq!(
            margin_lhs(0.1, 0.1, 0.0, 0.0, 1.0, 1.0),
            Err(SystemError::ZeroPeriod(0.0))
        );
    }

    #[test]
    fn margin_schedule_eventually_decreasing() {
        let (l, m, d1) = (1.2674, 1.5574, 0.1);
        let f = |t: f64| margin_lhs(t * t, t, t, d1, l, m).unwrap();
        let mut prev = f(1e-2);
        for k in 1..40 {
            let t = 1e-2 * 0.8f64.powi(k);
            let cur = f(t);
            assert!(cur < prev, "not decreasing at τ = {t}");
            prev = cur;
        }
    }

    #[test]
    fn intersample_examples() {
        assert!((intersample_bound(1.5574, 0.1, 0.2) - 0.16574).abs() < 1e-15);
        assert_eq!(intersample_bound(1.5574, 0.1, 0.0), 0.0);
        assert_eq!(intersample_bound(0.0, 0.0, 5.0), 0.0);
    }

    #[test]
    fn phi2_is_continuous_across_series_switch() {
        for l in [0.5, 1.0, 2.0] {
            let tau = 0.1 / l;
            let below = phi2(l, tau * (1.0 - 1e-12));
            let above = phi2(l, tau * (1.0 + 1e-12));
            assert!(rel(below, above) < 1e-9);
        }
    }

    #[test]
    fn simulation_examples() {
        let id = SystemSpec::from_strings(
            &["x"],
            &["u"],
            &["u"],
            Bounds::interval(-1.0, 2.0).unwrap(),
            Bounds::interval(-1.0, 1.0).unwrap(),
            1.0,
            1.0,
        )
        .unwrap();
        let tr = simulate_step(&id, &[0.0], &[1.0], 0.5, 0.0, 4, 0).unwrap();
        assert_eq!(tr.last(), &[0.5]);
        assert_eq!(tr.x.len(), 5);

        let grow = SystemSpec::from_strings(
            &["x"],
            &["u"],
            &["x"],
            Bounds::interval(0.0, 2.0).unwrap(),
            Bounds::interval(0.0, 0.0).unwrap(),
            1.0,
            2.0,
        )
        .unwrap();
        let tr = simulate_step(&grow, &[1.0], &[0.0], 0.1, 0.0, 64, 0).unwrap();
        assert!((tr.last()[0] - 0.1f64.exp()).abs() < 1e-9);

        let a = simulate_step(&id, &[0.5], &[0.2], 0.3, 0.4, 16, 99).unwrap();
        let b = simulate_step(&id, &[0.5], &[0.2], 0.3, 0.4, 16, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_step(&id, &[0.5], &[0.2], 0.3, 0.4, 16, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn simulation_truncates_on_exit() {
        let id = identity_1d();
        let tr = simulate_step(&id, &[0.9], &[1.0], 0.5, 0.0, 10, 0).unwrap();
        assert_eq!(tr.exited, Some(3));
        assert!(tr.x.iter().all(|x| id.state_box.contains(x)));
        let blow = SystemSpec::from_strings(
            &["x"],
            &["u"],
            &["x^4"],
            Bounds::interval(-f64::MAX, f64::MAX).unwrap(),
            Bounds::interval(0.0, 0.0).unwrap(),
            1.0,
            1.0,
        )
        .unwrap();
        let err = simulate_step(&blow, &[1.0], &[0.0], 2.0, 0.0, 8, 0).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }), "{err:?}");
    }

    #[test]
    fn constant_estimates() {
        let id = identity_1d();
        let est = estimate_constants(&id, 2000, 1).unwrap();
        assert!(est.bound <= 1.0 && est.bound > 0.99);
        assert!(!est.rigorous);
        assert!(est.to_string().contains("NON-RIGOROUS"));
        let constant = SystemSpec::from_strings(
            &["x", "y"],
            &["u"],
            &["3", "-2"],
            Bounds::new(vec![0.0; 2], vec![1.0; 2]).unwrap(),
            Bounds::interval(0.0, 1.0).unwrap(),
            0.0,
            3.0,
        )
        .unwrap();
        assert_eq!(estimate_constants(&constant, 100, 2).unwrap().lipschitz, 0.0);
        let est = estimate_constants(&car(), 5000, 3).unwrap();
        assert!(est.bound <= 1.5574 + 1e-3, "{est}");
    }

    #[test]
    fn spot_check_flags_bad_constants() {
        let id = identity_1d();
        assert!(id.spot_check(1000, 0).is_empty());
        let mut bad = id.clone();
        bad.bound = 0.5;
        bad.lipschitz = 0.5;
        let w = bad.recompile().unwrap().spot_check(1000, 0);
        assert_eq!(w.len(), 2, "{w:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn radius_is_monotone(
            base in prop::collection::vec(0.0f64..1.0, 6),
            which in 0usize..5,
            bump in 0.0f64..1.0,
        ) {
            let mut p = base.clone();
            let r0 = gronwall_radius(p[0], p[1], p[2], p[3], 3.0 * p[4], p[5]);
            // η, μ, τ, δ1, M
            let slot = [0, 1, 2, 3, 5][which];
            p[slot] += bump;
            let r1 = gronwall_radius(p[0], p[1], p[2], p[3], 3.0 * p[4], p[5]);
            prop_assert!(r1 >= r0 * (1.0 - 1e-15), "{} < {}", r1, r0);
        }
    }

    proptest! {
        #[test]
        fn rk4_matches_affine_closed_form(
            a in -5.0f64..5.0,
            u in -1.0f64..1.0,
            x0 in -1.0f64..1.0,
            tau_frac in 0.01f64..1.0,
        ) {
            let tau = if a == 0.0 { tau_frac } else { 0.5 / a.abs() * tau_frac };
            let sys = affine(a, (-1e6, 1e6));
            let tr = simulate_step(&sys, &[x0], &[u], tau, 0.0, 256, 0).unwrap();
            let exact = (a * tau).exp() * x0 + u * phi1(a, tau);
            prop_assert!((tr.last()[0] - exact).abs() < 1e-8);
        }
    }
}
