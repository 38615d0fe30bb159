//! Arithmetic expressions for vector fields.
//!
//! Expressions are parsed once from text and then evaluated many times, either
//! against a name→value environment ([`Expression::eval`]) or, after binding
//! variable names to slot indices, against a plain slice ([`BoundExpr`]). The
//! second form is what the abstraction and the simulator use in their inner
//! loops.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' atom)*
//! atom    := number | ident | func '(' sum (',' sum)* ')' | '(' sum ')'
//! ```
//!
//! All binary operators are left associative, `^` included. Angles are in
//! radians.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown function `{name}` at column {column}")]
    UnknownFunction { name: String, column: usize },
    #[error("unbalanced parentheses at column {column}")]
    Unbalanced { column: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error in `{expr}`: {message}")]
    Domain { expr: String, message: String },
    #[error("component {index}: {source}")]
    Component {
        index: usize,
        #[source]
        source: Box<ExprError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Expression tree, generic over how variables are referenced.
///
/// Parsed expressions use names ([`Expression`]); bound expressions use slot
/// indices ([`BoundExpr`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<V> {
    Num(f64),
    Var(V),
    Neg(Box<Node<V>>),
    Bin(BinOp, Box<Node<V>>, Box<Node<V>>),
    Call(Func, Vec<Node<V>>),
}

pub type Expression = Node<String>;
pub type BoundExpr = Node<usize>;

impl<V> Node<V> {
    pub fn var(v: V) -> Self {
        Node::Var(v)
    }

    pub fn bin(op: BinOp, lhs: Node<V>, rhs: Node<V>) -> Self {
        Node::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call1(f: Func, arg: Node<V>) -> Self {
        Node::Call(f, vec![arg])
    }

    fn visit_vars<'a>(&'a self, out: &mut impl FnMut(&'a V)) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => out(v),
            Node::Neg(e) => e.visit_vars(out),
            Node::Bin(_, l, r) => {
                l.visit_vars(out);
                r.visit_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.visit_vars(out)),
        }
    }

    fn eval_by<F>(&self, lookup: &F) -> Result<f64, ExprError>
    where
        F: Fn(&V) -> Result<f64, ExprError>,
        Node<V>: fmt::Display,
    {
        let value = match self {
            Node::Num(v) => *v,
            Node::Var(v) => lookup(v)?,
            Node::Neg(e) => -e.eval_by(lookup)?,
            Node::Bin(op, l, r) => {
                let a = l.eval_by(lookup)?;
                let b = r.eval_by(lookup)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let p = a.powf(b);
                        if p.is_nan() && !a.is_nan() && !b.is_nan() {
                            return Err(self.domain("non-real power"));
                        }
                        p
                    }
                }
            }
            Node::Call(f, args) => {
                let a = args[0].eval_by(lookup)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Atan => a.atan(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.domain(&format!("logarithm of non-positive value {a}")));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain(&format!("square root of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_by(lookup)?),
                    Func::Max => a.max(args[1].eval_by(lookup)?),
                }
            }
        };
        Ok(value)
    }

    fn domain(&self, message: &str) -> ExprError
    where
        Node<V>: fmt::Display,
    {
        ExprError::Domain {
            expr: self.to_string(),
            message: message.to_string(),
        }
    }
}

impl Expression {
    /// Distinct variable names in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        self.visit_vars(&mut |v: &String| {
            if !names.contains(&v.as_str()) {
                names.push(v);
            }
        });
        names
    }

    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<f64, ExprError> {
        self.eval_by(&|name: &String| {
            env.get(name)
                .copied()
                .ok_or_else(|| ExprError::Unbound(name.clone()))
        })
    }

    /// Replaces variable names by their position in `slots`.
    pub fn bind(&self, slots: &[String]) -> Result<BoundExpr, ExprError> {
        Ok(match self {
            Node::Num(v) => Node::Num(*v),
            Node::Var(name) => Node::Var(
                slots
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| ExprError::Unbound(name.clone()))?,
            ),
            Node::Neg(e) => Node::Neg(Box::new(e.bind(slots)?)),
            Node::Bin(op, l, r) => Node::bin(*op, l.bind(slots)?, r.bind(slots)?),
            Node::Call(f, args) => Node::Call(
                *f,
                args.iter().map(|a| a.bind(slots)).collect::<Result<_, _>>()?,
            ),
        })
    }
}

impl BoundExpr {
    pub fn eval_slots(&self, values: &[f64]) -> Result<f64, ExprError> {
        self.eval_by(&|&i: &usize| {
            values
                .get(i)
                .copied()
                .ok_or_else(|| ExprError::Unbound(format!("#{i}")))
        })
    }
}

fn fmt_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // `{:?}` is the shortest representation that parses back to the same bits.
    write!(f, "{v:?}")
}

impl fmt::Display for Expression {
    /// Fully parenthesized; reparses to an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => fmt_num(*v, f),
            Node::Var(name) => f.write_str(name),
            Node::Neg(e) => write!(f, "(-{e})"),
            Node::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for BoundExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => fmt_num(*v, f),
            Node::Var(i) => write!(f, "${i}"),
            Node::Neg(e) => write!(f, "(-{e})"),
            Node::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| ExprError::Syntax {
                column,
                message: format!("malformed number `{s}`"),
            })?;
            if i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_') {
                return Err(ExprError::Syntax {
                    column: i + 1,
                    message: "implicit multiplication is not allowed".into(),
                });
            }
            toks.push((Tok::Num(v), column));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), column));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(ExprError::Syntax {
                        column,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            toks.push((tok, column));
            i += 1;
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_column: usize,
    open: Vec<usize>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.end_column)
    }

    fn syntax(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            column: self.column(),
            message: message.into(),
        }
    }

    fn sum(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Node::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expression, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.atom()?;
        while let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let rhs = self.atom()?;
            lhs = Node::bin(BinOp::Pow, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expect_close(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                self.open.pop();
                Ok(())
            }
            None => Err(ExprError::Unbalanced {
                column: *self.open.last().unwrap_or(&self.end_column),
            }),
            Some(_) => Err(self.syntax("expected `)`")),
        }
    }

    fn atom(&mut self) -> Result<Expression, ExprError> {
        let column = self.column();
        let tok = match self.toks.get(self.pos) {
            Some((t, _)) => t.clone(),
            None => return Err(self.syntax("unexpected end of input")),
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                self.open.push(column);
                let inner = self.sum()?;
                self.expect_close()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Tok::LParen));
                match (Func::from_name(&name), is_call) {
                    (Some(func), true) => {
                        self.open.push(self.column());
                        self.pos += 1;
                        let mut args = vec![self.sum()?];
                        while let Some(Tok::Comma) = self.peek() {
                            self.pos += 1;
                            args.push(self.sum()?);
                        }
                        self.expect_close()?;
                        if args.len() != func.arity() {
                            return Err(ExprError::Syntax {
                                column,
                                message: format!(
                                    "`{}` takes {} argument(s), got {}",
                                    func.name(),
                                    func.arity(),
                                    args.len()
                                ),
                            });
                        }
                        Ok(Node::Call(func, args))
                    }
                    (Some(func), false) => Err(ExprError::Syntax {
                        column,
                        message: format!("function `{}` requires parentheses", func.name()),
                    }),
                    (None, true) => Err(ExprError::UnknownFunction { name, column }),
                    (None, false) => Ok(Node::Var(name)),
                }
            }
            Tok::RParen => Err(ExprError::Unbalanced { column }),
            Tok::Op(c) => Err(ExprError::Syntax {
                column,
                message: format!("unexpected operator `{c}`"),
            }),
            Tok::Comma => Err(ExprError::Syntax {
                column,
                message: "unexpected `,`".into(),
            }),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expression, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax {
            column: 1,
            message: "empty expression".into(),
        });
    }
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end_column: text.chars().count() + 1,
        open: Vec::new(),
    };
    let expr = p.sum()?;
    match p.peek() {
        None => Ok(expr),
        Some(Tok::RParen) => Err(ExprError::Unbalanced {
            column: p.column(),
        }),
        Some(Tok::Ident(_)) | Some(Tok::Num(_)) | Some(Tok::LParen) => {
            Err(p.syntax("missing operator (implicit multiplication is not allowed)"))
        }
        Some(_) => Err(p.syntax("unexpected trailing input")),
    }
}

impl std::str::FromStr for Expression {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Expression {
        Node::Var(name.to_string())
    }

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn car_heading_expression() {
        let e = parse_expression("v*cos(alpha+theta)/cos(alpha)").unwrap();
        let expected = Node::bin(
            BinOp::Div,
            Node::bin(
                BinOp::Mul,
                v("v"),
                Node::call1(Func::Cos, Node::bin(BinOp::Add, v("alpha"), v("theta"))),
            ),
            Node::call1(Func::Cos, v("alpha")),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn single_variable_and_precedence() {
        assert_eq!(parse_expression("x").unwrap(), v("x"));
        let e = parse_expression("1+2*3").unwrap();
        assert_eq!(
            e,
            Node::bin(
                BinOp::Add,
                Node::Num(1.0),
                Node::bin(BinOp::Mul, Node::Num(2.0), Node::Num(3.0))
            )
        );
        assert_eq!(e.eval(&HashMap::new()).unwrap(), 7.0);
    }

    #[test]
    fn power_binds_tighter_than_negation() {
        let e = parse_expression("-x^2").unwrap();
        assert_eq!(e.eval(&env(&[("x", 3.0)])).unwrap(), -9.0);
        // left associative
        let e = parse_expression("2^3^2").unwrap();
        assert_eq!(e.eval(&HashMap::new()).unwrap(), 64.0);
        let e = parse_expression("8/4/2").unwrap();
        assert_eq!(e.eval(&HashMap::new()).unwrap(), 1.0);
    }

    #[test]
    fn evaluation_examples() {
        let tan = parse_expression("tan(phi)").unwrap();
        assert_eq!(tan.eval(&env(&[("phi", 0.0)])).unwrap(), 0.0);
        let alpha = parse_expression("atan(0.5*tan(0)/1)").unwrap();
        assert_eq!(alpha.eval(&HashMap::new()).unwrap(), 0.0);
        let recip = parse_expression("1/x").unwrap();
        match recip.eval(&env(&[("x", 0.0)])) {
            Err(ExprError::Domain { expr, .. }) => assert_eq!(expr, "(1.0 / x)"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse_expression("1 + log(x - 2)").unwrap();
        let err = e.eval(&env(&[("x", 1.0)])).unwrap_err();
        assert!(matches!(err, ExprError::Domain { ref expr, .. } if expr == "log((x - 2.0))"));
        let e = parse_expression("sqrt(x)").unwrap();
        assert!(e.eval(&env(&[("x", -1.0)])).is_err());
    }

    #[test]
    fn unbound_variable() {
        let e = parse_expression("x + y").unwrap();
        assert_eq!(
            e.eval(&env(&[("x", 1.0)])),
            Err(ExprError::Unbound("y".into()))
        );
    }

    #[test]
    fn syntax_errors_carry_columns() {
        assert!(matches!(
            parse_expression("2x"),
            Err(ExprError::Syntax { column: 2, .. })
        ));
        assert!(matches!(
            parse_expression("foo(x)"),
            Err(ExprError::UnknownFunction { column: 1, .. })
        ));
        assert!(matches!(
            parse_expression("(x + 1"),
            Err(ExprError::Unbalanced { column: 1 })
        ));
        assert!(matches!(
            parse_expression("x + 1)"),
            Err(ExprError::Unbalanced { column: 6 })
        ));
        assert!(matches!(
            parse_expression("sin x"),
            Err(ExprError::Syntax { column: 1, .. })
        ));
        assert!(matches!(
            parse_expression("x * * y"),
            Err(ExprError::Syntax { column: 5, .. })
        ));
        assert!(parse_expression("   ").is_err());
        assert!(parse_expression("x y").is_err());
        assert!(parse_expression("min(x)").is_err());
    }

    #[test]
    fn min_max_and_scientific_literals() {
        let e = parse_expression("max(x, 1e-3) + min(2.5E1, y)").unwrap();
        assert_eq!(e.eval(&env(&[("x", -1.0), ("y", 30.0)])).unwrap(), 25.001);
    }

    #[test]
    fn bound_matches_named() {
        let e = parse_expression("v*sin(a+theta)/cos(a) - 0.5*theta^2").unwrap();
        let slots = vec!["theta".to_string(), "v".to_string(), "a".to_string()];
        let b = e.bind(&slots).unwrap();
        let vals = [0.3, 0.9, -0.2];
        let named = e
            .eval(&env(&[("theta", 0.3), ("v", 0.9), ("a", -0.2)]))
            .unwrap();
        assert_eq!(b.eval_slots(&vals).unwrap().to_bits(), named.to_bits());
        assert!(e.bind(&slots[..2]).is_err());
    }

    #[test]
    fn variables_listed_once() {
        let e = parse_expression("x*y + x - sin(z)").unwrap();
        assert_eq!(e.variables(), vec!["x", "y", "z"]);
    }

    fn arb_expr() -> impl proptest::strategy::Strategy<Value = Expression> {
        use proptest::prelude::*;
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Node::Num),
            any::<f64>()
                .prop_filter("finite, non-negative", |v| v.is_finite() && v.is_sign_positive())
                .prop_map(Node::Num),
            "[a-z_][a-z0-9_]{0,4}"
                .prop_filter("not a function name", |s| Func::from_name(s).is_none())
                .prop_map(Node::Var),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let ops = prop::sample::select(vec![
                BinOp::Add,
                BinOp::Sub,
                BinOp::Mul,
                BinOp::Div,
                BinOp::Pow,
            ]);
            let unary = prop::sample::select(vec![
                Func::Sin,
                Func::Cos,
                Func::Tan,
                Func::Atan,
                Func::Exp,
                Func::Log,
                Func::Sqrt,
                Func::Abs,
            ]);
            let binary = prop::sample::select(vec![Func::Min, Func::Max]);
            prop_oneof![
                inner.clone().prop_map(|e| Node::Neg(Box::new(e))),
                (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Node::bin(op, l, r)),
                (unary, inner.clone()).prop_map(|(f, a)| Node::Call(f, vec![a])),
                (binary, inner.clone(), inner).prop_map(|(f, a, b)| Node::Call(f, vec![a, b])),
            ]
        })
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(10_000))]

        #[test]
        fn unparse_reparse_is_stable(t in arb_expr()) {
            let once = parse_expression(&t.to_string()).unwrap();
            proptest::prop_assert_eq!(&once, &t);
            let twice = parse_expression(&once.to_string()).unwrap();
            proptest::prop_assert_eq!(twice, once);
        }

        #[test]
        fn eval_is_pure(t in arb_expr(), vals in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let names = t.variables().into_iter().map(String::from).collect::<Vec<_>>();
            let env: HashMap<String, f64> = names.iter().cloned().zip(vals.iter().cycle().copied()).collect();
            let a = t.eval(&env);
            let b = t.eval(&env);
            match (a, b) {
                (Ok(x), Ok(y)) => proptest::prop_assert_eq!(x.to_bits(), y.to_bits()),
                (Err(x), Err(y)) => proptest::prop_assert_eq!(x, y),
                _ => proptest::prop_assert!(false, "results differ"),
            }
        }
    }
}
