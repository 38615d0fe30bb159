//! Run configuration: a TOML file with `system`, `labelling`, `objective`,
//! `parameters` and `simulation` sections. The grammar is documented in
//! `docs/config.md`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use certabs_core::abstraction::DEFAULT_MAX_CELLS;
use certabs_core::geometry::Bounds;
use certabs_core::labelling::{LabellingSpec, Proposition};
use certabs_core::logic::{parse_formula, Formula};
use certabs_core::system::{car, SystemSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A box written as one `[lo, hi]` pair per axis.
pub type BoxSpec = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub labelling: LabellingSection,
    #[serde(default)]
    pub objective: Option<ObjectiveSection>,
    pub parameters: ParameterSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Built-in model whose fields the other keys override (`"car"`).
    pub preset: Option<String>,
    pub states: Option<Vec<String>>,
    pub controls: Option<Vec<String>>,
    pub dynamics: Option<Vec<String>>,
    pub state_box: Option<BoxSpec>,
    pub control_box: Option<BoxSpec>,
    pub lipschitz: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabellingSection {
    #[serde(default)]
    pub proposition: Vec<PropositionSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropositionSection {
    pub name: String,
    pub boxes: Vec<BoxSpec>,
    pub complement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub formula: String,
    /// States that must all be winning for a realizable verdict. Without
    /// it, a non-empty winning set suffices.
    pub initial: Option<BoxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSection {
    #[serde(default)]
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon: f64,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    /// Reference period for the dwell mismatch bound.
    pub tau_star: Option<f64>,
    #[serde(default)]
    pub preserving: bool,
    #[serde(default = "one")]
    pub dwell: u32,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "hundred")]
    pub runs: usize,
    #[serde(default = "hundred")]
    pub steps: usize,
    #[serde(default = "eight")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Disturbance bound; defaults to `δ1`.
    pub delta: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            runs: 100,
            steps: 100,
            substeps: 8,
            seed: 0,
            delta: None,
        }
    }
}

fn one() -> u32 {
    1
}

fn eight() -> usize {
    8
}

fn hundred() -> usize {
    100
}

fn default_max_cells() -> usize {
    DEFAULT_MAX_CELLS
}

/// A validated configuration with its core objects built.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub sys: SystemSpec,
    pub labels: LabellingSpec,
    pub formula: Option<Formula>,
    pub initial: Option<Bounds>,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
    /// Non-fatal findings (clipped propositions, constant spot checks).
    pub warnings: Vec<String>,
}

fn to_bounds(spec: &BoxSpec) -> Result<Bounds> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = spec.iter().map(|[a, b]| (*a, *b)).unzip();
    Ok(Bounds::new(lo, hi)?)
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = String::from_utf8(bytes.clone()).context("config is not UTF-8")?;
        let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Problem::from_config(config, hash_bytes(&bytes))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).context("parsing config")?;
        Problem::from_config(config, hash_bytes(text.as_bytes()))
    }

    /// Validates everything and reports all problems at once.
    pub fn from_config(config: RunConfig, hash: String) -> Result<Self> {
        let mut errors: Vec<String> = Vec::new();
        let mut warnings = Vec::new();

        let sys = match build_system(&config.system) {
            Ok(s) => Some(s),
            Err(e) => {
                errors.push(format!("system: {e:#}"));
                None
            }
        };

        let p = &config.parameters;
        for (name, v) in [("delta1", p.delta1), ("delta2", p.delta2), ("epsilon", p.epsilon)] {
            if !(v.is_finite() && v >= 0.0) {
                errors.push(format!("parameters.{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(p.delta2 > p.delta1) {
            errors.push(format!(
                "parameters: delta2 ({}) must exceed delta1 ({})",
                p.delta2, p.delta1
            ));
        }
        if !(p.epsilon > 0.0) {
            errors.push("parameters.epsilon must be positive".into());
        }
        for (name, v) in [("tau", p.tau), ("eta", p.eta), ("tau_star", p.tau_star)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    errors.push(format!("parameters.{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(mu) = p.mu {
            if !(mu.is_finite() && mu >= 0.0) {
                errors.push(format!("parameters.mu must be non-negative, got {mu}"));
            }
        }
        if p.dwell == 0 {
            errors.push("parameters.dwell must be at least 1".into());
        }
        if config.simulation.substeps == 0 {
            errors.push("simulation.substeps must be at least 1".into());
        }
        if let Some(d) = config.simulation.delta {
            if !(d.is_finite() && d >= 0.0) {
                errors.push(format!("simulation.delta must be non-negative, got {d}"));
            }
        }

        let mut props = Vec::new();
        for (i, prop) in config.labelling.proposition.iter().enumerate() {
            let mut boxes = Vec::new();
            for (j, b) in prop.boxes.iter().enumerate() {
                match to_bounds(b) {
                    Ok(b) => {
                        if let Some(s) = &sys {
                            if b.dim() != s.n() {
                                errors.push(format!(
                                    "labelling.proposition[{i}] `{}` box {j} has dimension {}, expected {}",
                                    prop.name,
                                    b.dim(),
                                    s.n()
                                ));
                            }
                        }
                        boxes.push(b);
                    }
                    Err(e) => errors.push(format!("labelling.proposition[{i}] `{}` box {j}: {e:#}", prop.name)),
                }
            }
            props.push(Proposition {
                name: prop.name.clone(),
                boxes,
                complement: prop.complement.clone(),
            });
        }
        let labels = match LabellingSpec::new(props) {
            Ok(mut l) => {
                if let (Some(s), true) = (&sys, errors.is_empty()) {
                    match l.clip_to(&s.state_box) {
                        Ok(w) => warnings.extend(w),
                        Err(e) => errors.push(format!("labelling: {e}")),
                    }
                }
                Some(l)
            }
            Err(e) => {
                errors.push(format!("labelling: {e}"));
                None
            }
        };

        let mut formula = None;
        let mut initial = None;
        if let Some(obj) = &config.objective {
            match parse_formula(&obj.formula) {
                Ok(f) => {
                    if let Some(l) = &labels {
                        for a in f.atoms() {
                            if l.index(a).is_none() {
                                errors.push(format!("objective: formula uses undeclared proposition `{a}`"));
                            }
                        }
                    }
                    formula = Some(f);
                }
                Err(e) => errors.push(format!("objective.formula: {e}")),
            }
            if let Some(b) = &obj.initial {
                match to_bounds(b) {
                    Ok(b) => {
                        if let Some(s) = &sys {
                            if b.dim() != s.n() || !s.state_box.contains_box(&b) {
                                errors.push("objective.initial must be a box inside the state box".into());
                            }
                        }
                        initial = Some(b);
                    }
                    Err(e) => errors.push(format!("objective.initial: {e:#}")),
                }
            }
        }

        if !errors.is_empty() {
            bail!("invalid configuration:\n  - {}", errors.join("\n  - "));
        }
        let sys = sys.expect("no errors implies a system");
        warnings.extend(sys.spot_check(64, 0).into_iter().map(|w| format!("constants: {w}")));
        Ok(Problem {
            config,
            sys,
            labels: labels.expect("no errors implies a labelling"),
            formula,
            initial,
            hash,
            warnings,
        })
    }

    pub fn require_formula(&self) -> Result<&Formula> {
        self.formula
            .as_ref()
            .context("config has no [objective] section with a formula")
    }
}

fn build_system(s: &SystemSection) -> Result<SystemSpec> {
    let base = match s.preset.as_deref() {
        None => None,
        Some("car") => Some(car()),
        Some(other) => bail!("unknown preset `{other}` (available: car)"),
    };
    let names = |v: &Option<Vec<String>>, fallback: Option<&Vec<String>>, what: &str| -> Result<Vec<String>> {
        v.clone()
            .or_else(|| fallback.cloned())
            .with_context(|| format!("missing `{what}`"))
    };
    let states = names(&s.states, base.as_ref().map(|b| &b.state_names), "states")?;
    let controls = names(&s.controls, base.as_ref().map(|b| &b.control_names), "controls")?;
    let dynamics: Vec<String> = match (&s.dynamics, &base) {
        (Some(d), _) => d.clone(),
        (None, Some(b)) => b.dynamics.iter().map(|e| e.to_string()).collect(),
        (None, None) => bail!("missing `dynamics`"),
    };
    let state_box = match (&s.state_box, &base) {
        (Some(b), _) => to_bounds(b).context("state_box")?,
        (None, Some(b)) => b.state_box.clone(),
        (None, None) => bail!("missing `state_box`"),
    };
    let control_box = match (&s.control_box, &base) {
        (Some(b), _) => to_bounds(b).context("control_box")?,
        (None, Some(b)) => b.control_box.clone(),
        (None, None) => bail!("missing `control_box`"),
    };
    let lipschitz = s
        .lipschitz
        .or(base.as_ref().map(|b| b.lipschitz))
        .context("missing `lipschitz`")?;
    let bound = s.bound.or(base.as_ref().map(|b| b.bound)).context("missing `bound`")?;
    let st: Vec<&str> = states.iter().map(String::as_str).collect();
    let ct: Vec<&str> = controls.iter().map(String::as_str).collect();
    let dy: Vec<&str> = dynamics.iter().map(String::as_str).collect();
    Ok(SystemSpec::from_strings(&st, &ct, &dy, state_box, control_box, lipschitz, bound)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"
[system]
states = ["x"]
controls = ["u"]
dynamics = ["u"]
state_box = [[0.0, 1.0]]
control_box = [[-1.0, 1.0]]
lipschitz = 1.0
bound = 1.0

[[labelling.proposition]]
name = "p"
boxes = [[[0.2, 0.8]]]

[objective]
formula = "G p"

[parameters]
delta2 = 0.5
epsilon = 0.2
"#;

    #[test]
    fn parses_minimal_config() {
        let p = Problem::parse(LINE).unwrap();
        assert_eq!(p.sys.n(), 1);
        assert_eq!(p.labels.len(), 1);
        assert_eq!(p.config.parameters.dwell, 1);
        assert_eq!(p.config.simulation.substeps, 8);
        assert_eq!(p.hash.len(), 64);
    }

    #[test]
    fn reports_every_error() {
        let bad = LINE
            .replace("delta2 = 0.5", "delta1 = 0.6\ndelta2 = 0.5")
            .replace("G p", "G q")
            .replace("[[0.2, 0.8]]", "[[0.2, 0.8], [0.0, 1.0]]");
        let msg = format!("{:#}", Problem::parse(&bad).unwrap_err());
        assert!(msg.contains("delta2 (0.5) must exceed delta1 (0.6)"), "{msg}");
        assert!(msg.contains("undeclared proposition `q`"), "{msg}");
        assert!(msg.contains("dimension 2, expected 1"), "{msg}");
    }

    #[test]
    fn car_preset_with_overrides() {
        let text = r#"
[system]
preset = "car"
state_box = [[0.0, 1.0], [0.0, 0.8], [-0.15, 0.15]]

[parameters]
delta2 = 0.5
epsilon = 0.2
"#;
        let p = Problem::parse(text).unwrap();
        assert_eq!(p.sys.n(), 3);
        assert_eq!(p.sys.lipschitz, 1.2674);
        assert_eq!(p.sys.state_box.upper, vec![1.0, 0.8, 0.15]);
        assert!(p.formula.is_none());
    }

    #[test]
    fn malformed_formula_is_a_config_error() {
        let err = Problem::parse(&LINE.replace("G p", "G (p")).unwrap_err();
        assert!(format!("{err:#}").contains("objective.formula"));
    }
}
