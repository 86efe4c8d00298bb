//! Scalar arithmetic expressions over named variables.
//!
//! Vector-field components and functionals are plain scalar expressions in
//! the state variables `x0…x{n-1}` (plus any declared parameter names). The
//! grammar supports `+ - * / ^`, unary minus, parentheses, numeric literals
//! (including scientific notation) and the fixed function set
//! `{sin, cos, exp, tanh, abs, sqrt}`.
//!
//! Precedence, highest first: `^`, unary `-`, `*` `/`, `+` `-`. All binary
//! operators are left-associative except `^`, which is right-associative.
//! Whitespace is insignificant. There is no implicit multiplication: `2x`
//! is a syntax error.
//!
//! Parsed trees are immutable and evaluation is pure, so expressions can be
//! shared and evaluated from many threads at once.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Function names the parser accepts.
pub const FUNCTIONS: [&str; 6] = ["sin", "cos", "exp", "tanh", "abs", "sqrt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree. Variables carry both the slot index into the declared
/// variable list (fast slice-based evaluation) and their name (printing and
/// name-based evaluation).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var { index: usize, name: String },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluate with variable values given in declaration order.
    pub fn eval(&self, vars: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var { index, name } => *vars.get(*index).ok_or_else(|| Error::UnboundVariable {
                name: name.clone(),
            })?,
            Expr::Unary(op, a) => apply_unary(*op, a.eval(vars)?)?,
            Expr::Binary(op, a, b) => apply_binary(*op, a.eval(vars)?, b.eval(vars)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value in `{self}`")))
        }
    }

    /// Evaluate with variables bound by name.
    pub fn eval_map(&self, bindings: &BTreeMap<String, f64>) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var { name, .. } => {
                *bindings
                    .get(name)
                    .ok_or_else(|| Error::UnboundVariable { name: name.clone() })?
            }
            Expr::Unary(op, a) => apply_unary(*op, a.eval_map(bindings)?)?,
            Expr::Binary(op, a, b) => {
                apply_binary(*op, a.eval_map(bindings)?, b.eval_map(bindings)?)?
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value in `{self}`")))
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Const(_) | Expr::Var { .. } => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(_, _) => 5,
            Expr::Binary(BinaryOp::Pow, _, _) => 4,
            Expr::Binary(BinaryOp::Mul, _, _) | Expr::Binary(BinaryOp::Div, _, _) => 2,
            Expr::Binary(_, _, _) => 1,
        }
    }
}

fn apply_unary(op: UnaryOp, x: f64) -> Result<f64> {
    Ok(match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Abs => x.abs(),
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err(Error::Domain(format!("sqrt of negative value {x}")));
            }
            x.sqrt()
        }
    })
}

fn apply_binary(op: BinaryOp, x: f64, y: f64) -> Result<f64> {
    Ok(match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            x / y
        }
        BinaryOp::Pow => {
            if x < 0.0 && y.fract() != 0.0 {
                return Err(Error::Domain(format!(
                    "negative base {x} under non-integer exponent {y}"
                )));
            }
            x.powf(y)
        }
    })
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var { name, .. } => write!(f, "{name}"),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                child(f, a, a.prec() <= 3)
            }
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Tanh => "tanh",
                    UnaryOp::Abs => "abs",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, a, b) => {
                let p = self.prec();
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    BinaryOp::Pow => "^",
                };
                if *op == BinaryOp::Pow {
                    // The base must print as an atom, the exponent at unary level.
                    child(f, a, a.prec() < 5)?;
                    write!(f, "{sym}")?;
                    child(f, b, b.prec() < 3)
                } else {
                    child(f, a, a.prec() < p)?;
                    write!(f, "{sym}")?;
                    child(f, b, b.prec() <= p)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

/// Tokenize `src`; each token carries its 1-based character position.
fn lex(src: &str) -> Result<(Vec<(Tok, usize)>, usize)> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((Tok::Plus, pos));
                i += 1;
            }
            '-' => {
                toks.push((Tok::Minus, pos));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, pos));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, pos));
                i += 1;
            }
            '^' => {
                toks.push((Tok::Caret, pos));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, pos));
                i += 1;
            }
            d if d.is_ascii_digit() || d == '.' => {
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
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<f64>().map_err(|_| Error::Syntax {
                    position: start + 1,
                    message: format!("malformed number `{text}`"),
                })?;
                toks.push((Tok::Num(value), start + 1));
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                toks.push((Tok::Ident(text), start + 1));
            }
            other => {
                return Err(Error::Syntax {
                    position: pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok((toks, chars.len() + 1))
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    cursor: usize,
    eof_pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.cursor).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.cursor)
            .map(|(_, p)| *p)
            .unwrap_or(self.eof_pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.cursor).map(|(t, _)| t.clone());
        self.cursor += 1;
        t
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.bump();
                Ok(())
            }
            _ => Err(Error::Syntax {
                position: self.pos(),
                message: "expected `)`".into(),
            }),
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut left = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.product()?;
            left = Expr::Binary(op, Box::new(left), Box::new(right));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.unary()?;
            left = Expr::Binary(op, Box::new(left), Box::new(right));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if let Some(op) = function_op(&name) {
                    match self.peek() {
                        Some(Tok::LParen) => {
                            self.bump();
                            let arg = self.sum()?;
                            self.expect_rparen()?;
                            Ok(Expr::Unary(op, Box::new(arg)))
                        }
                        _ => Err(Error::Syntax {
                            position: self.pos(),
                            message: format!("expected `(` after function `{name}`"),
                        }),
                    }
                } else if let Some(index) = self.vars.iter().position(|v| v == &name) {
                    Ok(Expr::Var { index, name })
                } else if matches!(self.peek(), Some(Tok::LParen)) {
                    Err(Error::UnknownFunction { name, position: pos })
                } else {
                    Err(Error::UnknownIdentifier { name, position: pos })
                }
            }
            _ => Err(Error::Syntax {
                position: pos,
                message: "expected expression".into(),
            }),
        }
    }
}

fn function_op(name: &str) -> Option<UnaryOp> {
    Some(match name {
        "sin" => UnaryOp::Sin,
        "cos" => UnaryOp::Cos,
        "exp" => UnaryOp::Exp,
        "tanh" => UnaryOp::Tanh,
        "abs" => UnaryOp::Abs,
        "sqrt" => UnaryOp::Sqrt,
        _ => return None,
    })
}

/// Parse `src` against the declared variable names.
pub fn parse_expression<S: AsRef<str>>(src: &str, allowed_vars: &[S]) -> Result<Expr> {
    let vars: Vec<String> = allowed_vars.iter().map(|s| s.as_ref().to_string()).collect();
    let (toks, eof_pos) = lex(src)?;
    let mut parser = Parser {
        toks,
        cursor: 0,
        eof_pos,
        vars: &vars,
    };
    let expr = parser.sum()?;
    if parser.cursor != parser.toks.len() {
        return Err(Error::Syntax {
            position: parser.pos(),
            message: "unexpected trailing input".into(),
        });
    }
    Ok(expr)
}

/// Convenience: evaluate a freshly parsed expression by name map.
pub fn eval_expression(ast: &Expr, bindings: &BTreeMap<String, f64>) -> Result<f64> {
    ast.eval_map(bindings)
}

/// The canonical state-variable names `x0…x{n-1}`.
pub fn state_vars(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(src: &str, vars: &[&str]) -> Result<Expr> {
        parse_expression(src, vars)
    }

    fn ev(src: &str, vars: &[&str], vals: &[f64]) -> Result<f64> {
        p(src, vars)?.eval(vals)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1+2*3", &[], &[]).unwrap(), 7.0);
        assert_eq!(ev("2^3^2", &[], &[]).unwrap(), 512.0);
        assert_eq!(ev("-2^2", &[], &[]).unwrap(), -4.0);
        assert_eq!(ev("(1+2)*3", &[], &[]).unwrap(), 9.0);
        assert_eq!(ev("4/2/2", &[], &[]).unwrap(), 1.0);
        assert_eq!(ev("2^-1", &[], &[]).unwrap(), 0.5);
    }

    #[test]
    fn variable_node() {
        let e = p("x1", &["x0", "x1"]).unwrap();
        assert_eq!(
            e,
            Expr::Var {
                index: 1,
                name: "x1".into()
            }
        );
    }

    #[test]
    fn unbalanced_paren_reports_position() {
        match p("x0 + (", &["x0"]) {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 7),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn eval_examples() {
        assert!((ev("x1 + 2*sin(x0)", &["x0", "x1"], &[0.0, 3.0]).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(ev("x0^2", &["x0"], &[-2.0]).unwrap(), 4.0);
        assert!(matches!(
            ev("1/x0", &["x0"], &[0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ev("sqrt(x0)", &["x0"], &[-1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ev("x0^0.5", &["x0"], &[-2.0]),
            Err(Error::Domain(_))
        ));
        // exp overflow is reported, not silently infinite
        assert!(matches!(ev("exp(1000)", &[], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn no_implicit_multiplication() {
        assert!(p("2x0", &["x0"]).is_err());
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(
            p("y", &["x0"]),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            p("log(x0)", &["x0"]),
            Err(Error::UnknownFunction { .. })
        ));
    }

    #[test]
    fn eval_map_unbound() {
        let e = p("x0 + x1", &["x0", "x1"]).unwrap();
        let mut m = BTreeMap::new();
        m.insert("x0".to_string(), 1.0);
        assert!(matches!(
            e.eval_map(&m),
            Err(Error::UnboundVariable { .. })
        ));
        m.insert("x1".to_string(), 2.0);
        assert_eq!(e.eval_map(&m).unwrap(), 3.0);
    }

    #[test]
    fn whitespace_insignificant() {
        let a = p("x0+ 2 *  x1", &["x0", "x1"]).unwrap();
        let b = p("x0+2*x1", &["x0", "x1"]).unwrap();
        assert_eq!(a, b);
    }

    /// Plain recursive reference evaluator, kept free of the main path's
    /// domain checks so the comparison below is an independent route.
    fn reference_eval(e: &Expr, vals: &[f64]) -> f64 {
        match e {
            Expr::Const(c) => *c,
            Expr::Var { index, .. } => vals[*index],
            Expr::Unary(op, a) => {
                let x = reference_eval(a, vals);
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Tanh => x.tanh(),
                    UnaryOp::Abs => x.abs(),
                    UnaryOp::Sqrt => x.sqrt(),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = reference_eval(a, vals);
                let y = reference_eval(b, vals);
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / y,
                    BinaryOp::Pow => x.powf(y),
                }
            }
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let vars = ["x0", "x1"];
        let leaf = prop_oneof![
            (0u32..800).prop_map(|k| Expr::Const(f64::from(k) / 8.0)),
            (0usize..2).prop_map(move |i| Expr::Var {
                index: i,
                name: vars[i].to_string()
            }),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                (
                    prop_oneof![
                        Just(UnaryOp::Neg),
                        Just(UnaryOp::Sin),
                        Just(UnaryOp::Cos),
                        Just(UnaryOp::Tanh),
                        Just(UnaryOp::Abs),
                        Just(UnaryOp::Sqrt),
                    ],
                    inner.clone()
                )
                    .prop_map(|(op, a)| Expr::Unary(op, Box::new(a))),
                (
                    prop_oneof![
                        Just(BinaryOp::Add),
                        Just(BinaryOp::Sub),
                        Just(BinaryOp::Mul),
                        Just(BinaryOp::Div),
                        Just(BinaryOp::Pow),
                    ],
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expression(&printed, &["x0", "x1"])
                .unwrap_or_else(|err| panic!("`{printed}` failed to reparse: {err}"));
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn matches_reference_evaluator(
            e in arb_expr(),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let vals = [a, b];
            if let Ok(v) = e.eval(&vals) {
                let r = reference_eval(&e, &vals);
                prop_assert!(r.is_finite());
                let tol = 1e-12 * r.abs().max(1.0);
                prop_assert!((v - r).abs() <= tol, "impl {} vs reference {}", v, r);
            }
        }
    }
}
