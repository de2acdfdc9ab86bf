//! Scalar coordinate expressions.
//!
//! An [`Expr`] is an immutable, reference-counted syntax tree over decimal
//! literals, the coordinate variables `x1..xn`, the binary operators
//! `+ - * / ^`, unary minus and the functions `sin cos tan exp log sqrt`.
//! Subtrees are shared through [`Arc`], so the derivative of a large
//! expression reuses its operands instead of copying them.
//!
//! Arithmetic through the `std::ops` traits folds constants and the trivial
//! identities (`0 + e`, `1 * e`, `e ^ 1`, ...). The parser never folds, so a
//! parsed tree is exactly the text that produced it.

mod parse;
mod tape;

pub use parse::{parse_expr, parse_with_names};
pub use tape::Tape;

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Errors raised while parsing or evaluating expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func} argument {value} outside its domain")]
    Domain { func: &'static str, value: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("point has {got} coordinates, expression needs {needed}")]
    Arity { got: usize, needed: usize },
}

/// Elementary functions accepted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> Result<f64, ExprError> {
        match self {
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
            Func::Tan => Ok(v.tan()),
            Func::Exp => Ok(v.exp()),
            Func::Log if v <= 0.0 => Err(ExprError::Domain { func: "log", value: v }),
            Func::Log => Ok(v.ln()),
            Func::Sqrt if v < 0.0 => Err(ExprError::Domain { func: "sqrt", value: v }),
            Func::Sqrt => Ok(v.sqrt()),
        }
    }
}

#[derive(Debug)]
pub enum Node {
    Num(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

#[derive(Debug, Clone)]
pub struct Expr(Arc<Node>);

pub(crate) fn checked_div(a: f64, b: f64) -> Result<f64, ExprError> {
    if b == 0.0 {
        Err(ExprError::DivisionByZero)
    } else {
        Ok(a / b)
    }
}

pub(crate) fn checked_pow(a: f64, b: f64) -> Result<f64, ExprError> {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        if a == 0.0 && b < 0.0 {
            return Err(ExprError::DivisionByZero);
        }
        Ok(a.powi(b as i32))
    } else if a < 0.0 {
        Err(ExprError::Domain { func: "pow", value: a })
    } else if a == 0.0 && b < 0.0 {
        Err(ExprError::DivisionByZero)
    } else {
        Ok(a.powf(b))
    }
}

impl Expr {
    fn wrap(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn num(v: f64) -> Expr {
        Expr::wrap(Node::Num(v))
    }

    pub fn zero() -> Expr {
        Expr::num(0.0)
    }

    pub fn one() -> Expr {
        Expr::num(1.0)
    }

    /// Coordinate variable with zero-based index.
    pub fn var(index: usize) -> Expr {
        Expr::wrap(Node::Var(index))
    }

    // Unfolded constructors, used by the parser.
    pub(crate) fn raw_neg(e: Expr) -> Expr {
        Expr::wrap(Node::Neg(e))
    }
    pub(crate) fn raw_binary(op: u8, a: Expr, b: Expr) -> Expr {
        Expr::wrap(match op {
            b'+' => Node::Add(a, b),
            b'-' => Node::Sub(a, b),
            b'*' => Node::Mul(a, b),
            b'/' => Node::Div(a, b),
            b'^' => Node::Pow(a, b),
            _ => unreachable!("unknown operator"),
        })
    }
    pub(crate) fn raw_call(f: Func, e: Expr) -> Expr {
        Expr::wrap(Node::Call(f, e))
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self.0 {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    pub fn powf(self, exponent: Expr) -> Expr {
        match (self.as_num(), exponent.as_num()) {
            (_, Some(e)) if e == 0.0 => Expr::one(),
            (_, Some(e)) if e == 1.0 => self,
            (Some(b), Some(e)) => match checked_pow(b, e) {
                Ok(v) if v.is_finite() => Expr::num(v),
                _ => Expr::wrap(Node::Pow(self, exponent)),
            },
            _ => Expr::wrap(Node::Pow(self, exponent)),
        }
    }

    pub fn powi(self, k: i32) -> Expr {
        self.powf(Expr::num(k as f64))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        if let Some(v) = arg.as_num() {
            if let Ok(r) = f.apply(v) {
                if r.is_finite() {
                    return Expr::num(r);
                }
            }
        }
        Expr::raw_call(f, arg)
    }

    pub fn sin(self) -> Expr {
        Expr::call(Func::Sin, self)
    }
    pub fn cos(self) -> Expr {
        Expr::call(Func::Cos, self)
    }
    pub fn exp(self) -> Expr {
        Expr::call(Func::Exp, self)
    }
    pub fn ln(self) -> Expr {
        Expr::call(Func::Log, self)
    }
    pub fn sqrt(self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }

    /// Largest variable index plus one.
    pub fn arity(&self) -> usize {
        let mut seen = HashMap::new();
        self.arity_memo(&mut seen)
    }

    fn arity_memo(&self, seen: &mut HashMap<*const Node, usize>) -> usize {
        let key = Arc::as_ptr(&self.0);
        if let Some(&a) = seen.get(&key) {
            return a;
        }
        let a = match self.node() {
            Node::Num(_) => 0,
            Node::Var(i) => i + 1,
            Node::Neg(e) | Node::Call(_, e) => e.arity_memo(seen),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.arity_memo(seen).max(b.arity_memo(seen))
            }
        };
        seen.insert(key, a);
        a
    }

    /// True when the expression contains no variables.
    pub fn is_constant(&self) -> bool {
        self.arity() == 0
    }

    /// Recursive evaluation at `p`.
    pub fn eval(&self, p: &[f64]) -> Result<f64, ExprError> {
        let v = match self.node() {
            Node::Num(v) => *v,
            Node::Var(i) => *p.get(*i).ok_or(ExprError::Arity { got: p.len(), needed: i + 1 })?,
            Node::Neg(e) => -e.eval(p)?,
            Node::Add(a, b) => a.eval(p)? + b.eval(p)?,
            Node::Sub(a, b) => a.eval(p)? - b.eval(p)?,
            Node::Mul(a, b) => a.eval(p)? * b.eval(p)?,
            Node::Div(a, b) => checked_div(a.eval(p)?, b.eval(p)?)?,
            Node::Pow(a, b) => checked_pow(a.eval(p)?, b.eval(p)?)?,
            Node::Call(f, e) => f.apply(e.eval(p)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    /// Symbolic partial derivative with respect to the zero-based variable `var`.
    pub fn diff(&self, var: usize) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(var, &mut memo)
    }

    fn diff_memo(&self, var: usize, memo: &mut HashMap<*const Node, Expr>) -> Expr {
        let key = Arc::as_ptr(&self.0);
        if let Some(d) = memo.get(&key) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Num(_) => Expr::zero(),
            Node::Var(i) => {
                if *i == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(e) => -e.diff_memo(var, memo),
            Node::Add(a, b) => a.diff_memo(var, memo) + b.diff_memo(var, memo),
            Node::Sub(a, b) => a.diff_memo(var, memo) - b.diff_memo(var, memo),
            Node::Mul(a, b) => {
                let (da, db) = (a.diff_memo(var, memo), b.diff_memo(var, memo));
                da * b.clone() + a.clone() * db
            }
            Node::Div(a, b) => {
                let (da, db) = (a.diff_memo(var, memo), b.diff_memo(var, memo));
                if db.is_zero() {
                    da / b.clone()
                } else {
                    (da * b.clone() - a.clone() * db) / b.clone().powi(2)
                }
            }
            Node::Pow(a, b) => {
                let da = a.diff_memo(var, memo);
                if b.is_constant() {
                    let lowered = b.clone() - Expr::one();
                    b.clone() * a.clone().powf(lowered) * da
                } else {
                    let db = b.diff_memo(var, memo);
                    self.clone() * (db * a.clone().ln() + b.clone() * da / a.clone())
                }
            }
            Node::Call(f, e) => {
                let de = e.diff_memo(var, memo);
                if de.is_zero() {
                    Expr::zero()
                } else {
                    let outer = match f {
                        Func::Sin => e.clone().cos(),
                        Func::Cos => -e.clone().sin(),
                        Func::Tan => Expr::one() / e.clone().cos().powi(2),
                        Func::Exp => self.clone(),
                        Func::Log => Expr::one() / e.clone(),
                        Func::Sqrt => Expr::num(0.5) / self.clone(),
                    };
                    outer * de
                }
            }
        };
        memo.insert(key, d.clone());
        d
    }

    /// Replace every variable `xi` by `values[i]`.
    pub fn subst(&self, values: &[Expr]) -> Expr {
        let mut memo = HashMap::new();
        self.subst_memo(values, &mut memo)
    }

    fn subst_memo(&self, values: &[Expr], memo: &mut HashMap<*const Node, Expr>) -> Expr {
        let key = Arc::as_ptr(&self.0);
        if let Some(d) = memo.get(&key) {
            return d.clone();
        }
        let r = match self.node() {
            Node::Num(_) => self.clone(),
            Node::Var(i) => values.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Node::Neg(e) => -e.subst_memo(values, memo),
            Node::Add(a, b) => a.subst_memo(values, memo) + b.subst_memo(values, memo),
            Node::Sub(a, b) => a.subst_memo(values, memo) - b.subst_memo(values, memo),
            Node::Mul(a, b) => a.subst_memo(values, memo) * b.subst_memo(values, memo),
            Node::Div(a, b) => a.subst_memo(values, memo) / b.subst_memo(values, memo),
            Node::Pow(a, b) => a.subst_memo(values, memo).powf(b.subst_memo(values, memo)),
            Node::Call(f, e) => Expr::call(*f, e.subst_memo(values, memo)),
        };
        memo.insert(key, r.clone());
        r
    }

    /// Number of distinct nodes reachable from this expression.
    pub fn node_count(&self) -> usize {
        fn walk(e: &Expr, seen: &mut std::collections::HashSet<*const Node>) {
            if !seen.insert(Arc::as_ptr(&e.0)) {
                return;
            }
            match e.node() {
                Node::Num(_) | Node::Var(_) => {}
                Node::Neg(a) | Node::Call(_, a) => walk(a, seen),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                    walk(a, seen);
                    walk(b, seen);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        walk(self, &mut seen);
        seen.len()
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::num(v)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Num(v) => Expr::num(-v),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::raw_neg(self),
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Expr::num(a + b),
            (Some(a), _) if a == 0.0 => rhs,
            (_, Some(b)) if b == 0.0 => self,
            _ => Expr::raw_binary(b'+', self, rhs),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Expr::num(a - b),
            (Some(a), _) if a == 0.0 => -rhs,
            (_, Some(b)) if b == 0.0 => self,
            _ => Expr::raw_binary(b'-', self, rhs),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero();
        }
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Expr::num(a * b),
            _ if self.is_one() => rhs,
            _ if rhs.is_one() => self,
            (Some(a), _) if a == -1.0 => -rhs,
            (_, Some(b)) if b == -1.0 => -self,
            _ => Expr::raw_binary(b'*', self, rhs),
        }
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        if rhs.is_one() {
            return self;
        }
        if self.is_zero() && !rhs.is_zero() {
            return Expr::zero();
        }
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) if b != 0.0 => Expr::num(a / b),
            _ => Expr::raw_binary(b'/', self, rhs),
        }
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                $tr::$m(self, Expr::num(rhs))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                $tr::$m(Expr::num(self), rhs)
            }
        }
    )*};
}
scalar_ops!(Add add, Sub sub, Mul mul, Div div);

/// Fully parenthesised normal form; `parse` followed by `to_string` is the
/// identity on strings produced by `to_string`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "(-{})", -v),
            Node::Num(v) => write!(f, "{v}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(e) => write!(f, "(-{e})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Node::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

/// Sum of a sequence of expressions with folding.
pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
    terms.into_iter().fold(Expr::zero(), |acc, t| acc + t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, n: usize) -> Expr {
        parse_expr(text, n).unwrap()
    }

    fn central(e: &Expr, x: &[f64], var: usize) -> f64 {
        let h = 1e-5;
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[var] += h;
        b[var] -= h;
        (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("x1*x2", 2).eval(&[2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(p("sin(x1)", 1).eval(&[0.0]).unwrap(), 0.0);
        let v = p("4/(1-x1^2-x2^2)^2", 2).eval(&[0.5, 0.0]).unwrap();
        assert!((v - 4.0 / 0.5625).abs() < 1e-14);
        assert_eq!(p("4/(1+x1^2+x2^2)^2", 2).eval(&[0.0, 0.0]).unwrap(), 4.0);
    }

    #[test]
    fn eval_domain_errors() {
        assert_eq!(p("1/x1", 1).eval(&[0.0]), Err(ExprError::DivisionByZero));
        assert!(matches!(p("log(x1)", 1).eval(&[-1.0]), Err(ExprError::Domain { func: "log", .. })));
        assert!(matches!(p("sqrt(x1)", 1).eval(&[-1.0]), Err(ExprError::Domain { func: "sqrt", .. })));
        assert!(matches!(p("x1^0.5", 1).eval(&[-1.0]), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn diff_examples() {
        assert_eq!(p("x1^2", 1).diff(0).eval(&[3.0]).unwrap(), 6.0);
        let d = p("sin(x1*x2)", 2).diff(1).eval(&[1.0, std::f64::consts::PI]).unwrap();
        assert!((d + 1.0).abs() < 1e-15);
        assert!(p("x2", 2).diff(0).is_zero());
    }

    #[test]
    fn diff_matches_central_differences() {
        let cases = [
            "4/(1+x1^2+x2^2)^2",
            "sqrt(1+0.5*x1^2)*exp(x2)",
            "log(2+sin(x1))*cos(x2)^3",
            "tan(0.3*x1)/(2+x2^2)",
            "(1+x1^2)^(x2)",
        ];
        for c in cases {
            let e = p(c, 2);
            for k in 0..10 {
                let x = [0.1 * k as f64 - 0.4, 0.3 - 0.05 * k as f64];
                for var in 0..2 {
                    let exact = e.diff(var).eval(&x).unwrap();
                    let fd = central(&e, &x, var);
                    assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{c} d{var} at {x:?}");
                }
            }
        }
    }

    #[test]
    fn folding_keeps_values() {
        let e = p("x1*1 + 0*x2 + x1^1", 2);
        let d = e.diff(0);
        assert_eq!(d.eval(&[0.3, 0.2]).unwrap(), 2.0);
    }

    #[test]
    fn subst_composes() {
        let e = p("x1^2 + x2", 2);
        let s = e.subst(&[p("x1+x2", 2), p("x1*x2", 2)]);
        assert_eq!(s.eval(&[1.0, 2.0]).unwrap(), 9.0 + 2.0);
    }

    #[test]
    fn display_normal_form_round_trips() {
        for c in ["x1", "-x1^2", "2^3^x1", "-(x1 - 3.25)/x2", "sin(-x1)*1e-3", "x1 - -x2"] {
            let e = p(c, 2);
            let printed = e.to_string();
            assert_eq!(p(&printed, 2).to_string(), printed);
        }
        let folded = Expr::num(-2.0) * Expr::var(0);
        let printed = folded.to_string();
        assert_eq!(p(&printed, 1).to_string(), printed);
    }
}
