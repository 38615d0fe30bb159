//! LTL without next: syntax, negation normal form, and finite-trace monitors.
//!
//! Finite traces use a strong until (the right operand must occur within the
//! trace) and a weak release (it holds if its right operand survives to the
//! end of the trace).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelling::{LabellingSpec, PropSet};
use crate::system::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("next operator `X` at position {position} is not part of the logic")]
    NextOperator { position: usize },
    #[error("`{0}` is negated but has no declared complement proposition")]
    NoComplement(String),
    #[error("unknown proposition `{0}`")]
    UnknownAtom(String),
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: Formula, b: Formula) -> Self {
        Formula::Release(Box::new(a), Box::new(b))
    }

    /// `□φ ≡ false R φ`.
    pub fn always(f: Formula) -> Self {
        Formula::release(Formula::False, f)
    }

    /// `◇φ ≡ true U φ`.
    pub fn eventually(f: Formula) -> Self {
        Formula::until(Formula::True, f)
    }

    /// Distinct atom names in order of first appearance.
    pub fn atoms(&self) -> Vec<&str> {
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a str>) {
            match f {
                Formula::True | Formula::False => {}
                Formula::Atom(a) => {
                    if !out.contains(&a.as_str()) {
                        out.push(a);
                    }
                }
                Formula::Not(g) => walk(g, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(_) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                a.is_nnf() && b.is_nnf()
            }
        }
    }

    /// Whether the formula has no temporal operator.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(g) => g.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_propositional() && b.is_propositional(),
            Formula::Until(..) | Formula::Release(..) => false,
        }
    }

    /// Evaluates a propositional formula on one label set.
    pub fn holds_at(&self, s: PropSet, index: &dyn Fn(&str) -> Option<usize>) -> Result<bool, LogicError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => s.contains(index(a).ok_or_else(|| LogicError::UnknownAtom(a.clone()))?),
            Formula::Not(g) => !g.holds_at(s, index)?,
            Formula::And(a, b) => a.holds_at(s, index)? && b.holds_at(s, index)?,
            Formula::Or(a, b) => a.holds_at(s, index)? || b.holds_at(s, index)?,
            Formula::Until(..) | Formula::Release(..) => {
                return Err(LogicError::Syntax {
                    position: 0,
                    message: "temporal operator in a state predicate".into(),
                })
            }
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => f.write_str(a),
            Formula::Not(g) => write!(f, "!{g}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
            Formula::Release(a, b) => write!(f, "({a} R {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    Until,
    Release,
    Globally,
    Finally,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, LogicError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let position = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match word.as_str() {
                "U" => Tok::Until,
                "R" => Tok::Release,
                "G" => Tok::Globally,
                "F" => Tok::Finally,
                "X" => return Err(LogicError::NextOperator { position }),
                _ => Tok::Ident(word),
            };
            out.push((tok, position));
            continue;
        }
        let tok = match c {
            '!' | '~' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                return Err(LogicError::Syntax {
                    position,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        // accept doubled `&&` and `||`
        if matches!(tok, Tok::And | Tok::Or) && chars.get(i + 1) == Some(&c) {
            i += 1;
        }
        out.push((tok, position));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn error(&self, message: &str) -> LogicError {
        LogicError::Syntax {
            position: self.position(),
            message: message.to_string(),
        }
    }

    fn or(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.binary_temporal()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Formula::and(lhs, self.binary_temporal()?);
        }
        Ok(lhs)
    }

    fn binary_temporal(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.unary()?;
        match self.peek() {
            Some(Tok::Until) => {
                self.pos += 1;
                Ok(Formula::until(lhs, self.binary_temporal()?))
            }
            Some(Tok::Release) => {
                self.pos += 1;
                Ok(Formula::release(lhs, self.binary_temporal()?))
            }
            _ => Ok(lhs),
        }
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Globally) => {
                self.pos += 1;
                Ok(Formula::always(self.unary()?))
            }
            Some(Tok::Finally) => {
                self.pos += 1;
                Ok(Formula::eventually(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, LogicError> {
        let Some((tok, position)) = self.toks.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of formula"));
        };
        self.pos += 1;
        match tok {
            Tok::Ident(name) => Ok(match name.as_str() {
                "true" => Formula::True,
                "false" => Formula::False,
                _ => Formula::Atom(name),
            }),
            Tok::LParen => {
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(LogicError::Syntax {
                        position: self.position(),
                        message: format!("expected `)` to close `(` at {position}"),
                    });
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(LogicError::Syntax {
                position,
                message: "expected a proposition, constant or `(`".into(),
            }),
        }
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, LogicError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.chars().count() + 1,
    };
    let f = p.or()?;
    if p.pos < p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(f)
}

impl std::str::FromStr for Formula {
    type Err = LogicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Pushes negations to atoms, replacing `¬π` by the complement of `π`.
pub fn to_nnf(f: &Formula, complement: &dyn Fn(&str) -> Option<String>) -> Result<Formula, LogicError> {
    fn go(f: &Formula, neg: bool, c: &dyn Fn(&str) -> Option<String>) -> Result<Formula, LogicError> {
        Ok(match (f, neg) {
            (Formula::True, false) | (Formula::False, true) => Formula::True,
            (Formula::True, true) | (Formula::False, false) => Formula::False,
            (Formula::Atom(a), false) => Formula::Atom(a.clone()),
            (Formula::Atom(a), true) => Formula::Atom(c(a).ok_or_else(|| LogicError::NoComplement(a.clone()))?),
            (Formula::Not(g), _) => go(g, !neg, c)?,
            (Formula::And(a, b), false) => Formula::and(go(a, false, c)?, go(b, false, c)?),
            (Formula::And(a, b), true) => Formula::or(go(a, true, c)?, go(b, true, c)?),
            (Formula::Or(a, b), false) => Formula::or(go(a, false, c)?, go(b, false, c)?),
            (Formula::Or(a, b), true) => Formula::and(go(a, true, c)?, go(b, true, c)?),
            (Formula::Until(a, b), false) => Formula::until(go(a, false, c)?, go(b, false, c)?),
            (Formula::Until(a, b), true) => Formula::release(go(a, true, c)?, go(b, true, c)?),
            (Formula::Release(a, b), false) => Formula::release(go(a, false, c)?, go(b, false, c)?),
            (Formula::Release(a, b), true) => Formula::until(go(a, true, c)?, go(b, true, c)?),
        })
    }
    go(f, false, complement)
}

/// [`to_nnf`] with complements taken from a labelling.
pub fn to_nnf_with(f: &Formula, labels: &LabellingSpec) -> Result<Formula, LogicError> {
    to_nnf(f, &|a| labels.complement_of(a).map(String::from))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Sat
        } else {
            Verdict::Unsat
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Sat => "sat",
            Verdict::Unsat => "unsat",
            Verdict::Unknown => "unknown",
        })
    }
}

/// A finite sequence of label sets over a named alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub alphabet: Vec<String>,
    pub steps: Vec<PropSet>,
}

impl Trace {
    pub fn new(alphabet: Vec<String>, steps: Vec<PropSet>) -> Self {
        Trace { alphabet, steps }
    }

    /// Builds a trace from named sets, extending the alphabet as needed.
    pub fn from_names<S: AsRef<str>>(steps: &[Vec<S>]) -> Self {
        let mut alphabet: Vec<String> = Vec::new();
        let mut out = Vec::with_capacity(steps.len());
        for step in steps {
            let mut s = PropSet::EMPTY;
            for name in step {
                let name = name.as_ref();
                let i = match alphabet.iter().position(|a| a == name) {
                    Some(i) => i,
                    None => {
                        alphabet.push(name.to_string());
                        alphabet.len() - 1
                    }
                };
                s.insert(i);
            }
            out.push(s);
        }
        Trace::new(alphabet, out)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|a| a == name)
    }
}

/// Truth value of `f` at every position of `steps`. Negation is evaluated
/// directly, so formulas need not be in NNF.
pub fn positions(f: &Formula, steps: &[PropSet], index: &dyn Fn(&str) -> Option<usize>) -> Result<Vec<bool>, LogicError> {
    let n = steps.len();
    Ok(match f {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Atom(a) => {
            let i = index(a).ok_or_else(|| LogicError::UnknownAtom(a.clone()))?;
            steps.iter().map(|s| s.contains(i)).collect()
        }
        Formula::Not(g) => positions(g, steps, index)?.into_iter().map(|v| !v).collect(),
        Formula::And(a, b) => {
            let (x, y) = (positions(a, steps, index)?, positions(b, steps, index)?);
            x.iter().zip(&y).map(|(p, q)| *p && *q).collect()
        }
        Formula::Or(a, b) => {
            let (x, y) = (positions(a, steps, index)?, positions(b, steps, index)?);
            x.iter().zip(&y).map(|(p, q)| *p || *q).collect()
        }
        Formula::Until(a, b) => {
            let (x, y) = (positions(a, steps, index)?, positions(b, steps, index)?);
            let mut out = vec![false; n];
            let mut next = false;
            for i in (0..n).rev() {
                next = y[i] || (x[i] && next);
                out[i] = next;
            }
            out
        }
        Formula::Release(a, b) => {
            let (x, y) = (positions(a, steps, index)?, positions(b, steps, index)?);
            let mut out = vec![false; n];
            let mut next = true;
            for i in (0..n).rev() {
                next = y[i] && (x[i] || next);
                out[i] = next;
            }
            out
        }
    })
}

/// Finite-trace verdict at the first position.
pub fn check_discrete(trace: &Trace, f: &Formula) -> Result<Verdict, LogicError> {
    if trace.is_empty() {
        return Err(LogicError::EmptyTrace);
    }
    let sat = positions(f, &trace.steps, &|a| trace.index(a))?;
    Ok(Verdict::from_bool(sat[0]))
}

/// Labels of the dense samples of a trajectory.
pub fn label_dense(traj: &Trajectory, labels: &LabellingSpec) -> Vec<PropSet> {
    traj.x.iter().map(|x| labels.label(x)).collect()
}

/// Labels along the piecewise-linear interpolant, one entry per maximal
/// piece on which the label is constant (box faces split segments).
pub fn label_interpolant(traj: &Trajectory, labels: &LabellingSpec) -> Vec<PropSet> {
    let mut faces: Vec<Vec<f64>> = vec![Vec::new(); traj.x.first().map_or(0, |x| x.len())];
    for p in labels.props() {
        for b in &p.boxes {
            for (axis, list) in faces.iter_mut().enumerate() {
                list.push(b.lower[axis]);
                list.push(b.upper[axis]);
            }
        }
    }
    let mut out = Vec::with_capacity(traj.x.len());
    let push = |s: PropSet, out: &mut Vec<PropSet>| {
        if out.last() != Some(&s) {
            out.push(s);
        }
    };
    let at = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect()
    };
    for (k, x) in traj.x.iter().enumerate() {
        push(labels.label(x), &mut out);
        let Some(y) = traj.x.get(k + 1) else { break };
        let mut ts: Vec<f64> = Vec::new();
        for (axis, list) in faces.iter().enumerate() {
            let d = y[axis] - x[axis];
            if d == 0.0 {
                continue;
            }
            for &face in list {
                let t = (face - x[axis]) / d;
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut prev = 0.0;
        for &t in &ts {
            push(labels.label(&at(x, y, 0.5 * (prev + t))), &mut out);
            // A point exactly on a face: nudge onto it from both sides is not
            // needed, closed boxes already include it.
            push(labels.label(&at(x, y, t)), &mut out);
            prev = t;
        }
        if !ts.is_empty() {
            push(labels.label(&at(x, y, 0.5 * (prev + 1.0))), &mut out);
        }
    }
    out
}

/// Continuous-time verdict on a dense trajectory: the verdict of the dense
/// samples if the exact label sequence of the interpolant agrees with it,
/// `Unknown` otherwise.
pub fn check_continuous(traj: &Trajectory, labels: &LabellingSpec, f: &Formula) -> Result<Verdict, LogicError> {
    if traj.x.is_empty() {
        return Err(LogicError::EmptyTrace);
    }
    let index = |a: &str| labels.index(a);
    let dense = positions(f, &label_dense(traj, labels), &index)?[0];
    let fine = positions(f, &label_interpolant(traj, labels), &index)?[0];
    Ok(if dense == fine {
        Verdict::from_bool(dense)
    } else {
        Verdict::Unknown
    })
}
