//! Symbolic scalar expressions over named real variables.
//!
//! Every scalar object in this library — Hamiltonians, generating functions,
//! constraint functions, 1-form components, mass-matrix entries — is an
//! [`Expr`]. Expressions are immutable trees behind [`Arc`] nodes, so cloning
//! is cheap and sharing across threads is safe.
//!
//! The text form is ordinary infix notation with `^` binding tightest
//! (right-associative, constant exponent only), the functions `sin`, `cos`,
//! `exp`, `log`, `sqrt`, and variable names matching
//! `[a-zA-Z_][a-zA-Z0-9_]*`. Implicit multiplication is not accepted.
//!
//! ```
//! use hjgeo::symexpr::{Expr, Binding};
//!
//! let h: Expr = "p1^2/2 + q1^2/2".parse().unwrap();
//! let dh = h.diff("q1");
//! let mut b = Binding::new();
//! b.set("q1", 3.0);
//! b.set("p1", 0.0);
//! assert_eq!(dh.eval(&b).unwrap(), 3.0);
//! ```

mod compiled;
mod parser;

pub use compiled::CompiledExpr;
pub use parser::ParseError;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Immutable symbolic expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinOp, Arc<Expr>, Arc<Expr>),
    /// Power with a constant exponent. Non-integer exponents require a
    /// positive base at evaluation time.
    Pow(Arc<Expr>, f64),
}

/// Map from variable name to value. Evaluation fails loudly on any unbound
/// free variable.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    values: HashMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.values.insert(name.to_owned(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Binding {
    fn from_iter<T: IntoIterator<Item = (S, f64)>>(iter: T) -> Self {
        Binding {
            values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {op} of {value} in `{location}`")]
    Domain {
        op: &'static str,
        value: f64,
        location: String,
    },
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_owned())
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    // Smart constructors: constant folding plus 0/1 elimination. Nothing
    // fancier; tests compare values, not trees.

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Binary(BinOp::Add, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (_, Some(0.0)) => a,
            (Some(0.0), _) => Expr::neg(b),
            _ => Expr::Binary(BinOp::Sub, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::zero(),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            _ => Expr::Binary(BinOp::Mul, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(0.0), _) => Expr::zero(),
            (_, Some(1.0)) => a,
            _ => Expr::Binary(BinOp::Div, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match &a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Unary(UnaryOp::Neg, inner) => inner.as_ref().clone(),
            _ => Expr::Unary(UnaryOp::Neg, Arc::new(a)),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        Expr::Unary(op, Arc::new(a))
    }

    pub fn pow(base: Expr, exponent: f64) -> Expr {
        if exponent == 0.0 {
            return Expr::one();
        }
        if exponent == 1.0 {
            return base;
        }
        if let Some(c) = base.as_const() {
            return Expr::Const(pow_value(c, exponent).unwrap_or(f64::NAN));
        }
        Expr::Pow(Arc::new(base), exponent)
    }

    /// Set of free variable names.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        self.collect_vars(&mut set);
        set
    }

    fn collect_vars(&self, set: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                set.insert(name.clone());
            }
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_vars(set),
            Expr::Binary(_, a, b) => {
                a.collect_vars(set);
                b.collect_vars(set);
            }
        }
    }

    /// IEEE double evaluation at a binding of all free variables.
    pub fn eval(&self, binding: &Binding) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => binding
                .get(name)
                .ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Unary(op, a) => {
                let x = a.eval(binding)?;
                apply_unary(*op, x).ok_or_else(|| EvalError::Domain {
                    op: op.name(),
                    value: x,
                    location: self.to_string(),
                })
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(binding)?;
                let y = b.eval(binding)?;
                Ok(match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                })
            }
            Expr::Pow(a, c) => {
                let x = a.eval(binding)?;
                pow_value(x, *c).ok_or_else(|| EvalError::Domain {
                    op: "^",
                    value: x,
                    location: self.to_string(),
                })
            }
        }
    }

    /// Exact symbolic partial derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(name) => {
                if name == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Unary(op, a) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Expr::zero();
                }
                let inner = a.as_ref().clone();
                let outer = match op {
                    UnaryOp::Neg => return Expr::neg(da),
                    UnaryOp::Sin => Expr::unary(UnaryOp::Cos, inner),
                    UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, inner)),
                    UnaryOp::Exp => Expr::unary(UnaryOp::Exp, inner),
                    UnaryOp::Log => return Expr::div(da, inner),
                    UnaryOp::Sqrt => {
                        return Expr::div(
                            da,
                            Expr::mul(Expr::constant(2.0), Expr::unary(UnaryOp::Sqrt, inner)),
                        )
                    }
                };
                Expr::mul(outer, da)
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                match op {
                    BinOp::Add => Expr::add(a.diff(var), b.diff(var)),
                    BinOp::Sub => Expr::sub(a.diff(var), b.diff(var)),
                    BinOp::Mul => Expr::add(
                        Expr::mul(a.diff(var), b.clone()),
                        Expr::mul(a.clone(), b.diff(var)),
                    ),
                    BinOp::Div => Expr::div(
                        Expr::sub(
                            Expr::mul(a.diff(var), b.clone()),
                            Expr::mul(a.clone(), b.diff(var)),
                        ),
                        Expr::pow(b.clone(), 2.0),
                    ),
                }
            }
            Expr::Pow(a, c) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::mul(
                    Expr::mul(Expr::constant(*c), Expr::pow(a.as_ref().clone(), c - 1.0)),
                    da,
                )
            }
        }
    }

    /// Replace every occurrence of `var` by `replacement`.
    pub fn substitute(&self, var: &str, replacement: &Expr) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => {
                if name == var {
                    replacement.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(var, replacement)),
            Expr::Binary(op, a, b) => {
                let a = a.substitute(var, replacement);
                let b = b.substitute(var, replacement);
                match op {
                    BinOp::Add => Expr::add(a, b),
                    BinOp::Sub => Expr::sub(a, b),
                    BinOp::Mul => Expr::mul(a, b),
                    BinOp::Div => Expr::div(a, b),
                }
            }
            Expr::Pow(a, c) => Expr::pow(a.substitute(var, replacement), *c),
        }
    }

    /// Apply several substitutions simultaneously (names are looked up in
    /// `subs`, so a replacement is never re-substituted).
    pub fn substitute_all(&self, subs: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => subs.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute_all(subs)),
            Expr::Binary(op, a, b) => {
                let a = a.substitute_all(subs);
                let b = b.substitute_all(subs);
                match op {
                    BinOp::Add => Expr::add(a, b),
                    BinOp::Sub => Expr::sub(a, b),
                    BinOp::Mul => Expr::mul(a, b),
                    BinOp::Div => Expr::div(a, b),
                }
            }
            Expr::Pow(a, c) => Expr::pow(a.substitute_all(subs), *c),
        }
    }

    /// Compile against a fixed variable order for fast repeated evaluation.
    /// Domain violations surface as NaN rather than errors.
    pub fn compile(&self, vars: &[&str]) -> CompiledExpr {
        CompiledExpr::new(self, vars)
    }
}

fn apply_unary(op: UnaryOp, x: f64) -> Option<f64> {
    match op {
        UnaryOp::Neg => Some(-x),
        UnaryOp::Sin => Some(x.sin()),
        UnaryOp::Cos => Some(x.cos()),
        UnaryOp::Exp => Some(x.exp()),
        UnaryOp::Log => (x > 0.0).then(|| x.ln()),
        UnaryOp::Sqrt => (x >= 0.0).then(|| x.sqrt()),
    }
}

pub(crate) fn pow_value(base: f64, exponent: f64) -> Option<f64> {
    if exponent.fract() == 0.0 {
        Some(base.powi(exponent as i32))
    } else if base > 0.0 {
        Some(base.powf(exponent))
    } else {
        None
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parser::parse(s)
    }
}

/// Parse an expression from DSL text.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parser::parse(text)
}

// Printing: infix with parentheses driven by precedence, round-trippable
// through `parse`.

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if *c < 0.0 => 1,
        Expr::Const(_) | Expr::Var(_) => 4,
        Expr::Unary(UnaryOp::Neg, _) => 1,
        Expr::Unary(_, _) => 4,
        Expr::Binary(BinOp::Add | BinOp::Sub, _, _) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, _, _) => 2,
        Expr::Pow(_, _) => 3,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, child: &Expr, min_prec: u8) -> fmt::Result {
    if precedence(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                fmt_child(f, a, 2)
            }
            Expr::Unary(op, a) => write!(f, "{}({})", op.name(), a),
            Expr::Binary(op, a, b) => {
                let (prec, sym) = match op {
                    BinOp::Add => (1, "+"),
                    BinOp::Sub => (1, "-"),
                    BinOp::Mul => (2, "*"),
                    BinOp::Div => (2, "/"),
                };
                fmt_child(f, a, prec)?;
                write!(f, " {sym} ")?;
                // right child needs strictly higher precedence for - and /
                let rp = match op {
                    BinOp::Add | BinOp::Mul => prec,
                    BinOp::Sub | BinOp::Div => prec + 1,
                };
                fmt_child(f, b, rp)
            }
            Expr::Pow(a, c) => {
                fmt_child(f, a, 4)?;
                if *c < 0.0 {
                    write!(f, "^({c})")
                } else {
                    write!(f, "^{c}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().map(|&(k, v)| (k, v)).collect()
    }

    #[test]
    fn parse_oscillator() {
        let e = parse("p1^2/2 + q1^2/2").unwrap();
        let b = bind(&[("q1", 1.0), ("p1", 2.0)]);
        assert_eq!(e.eval(&b).unwrap(), 2.5);
    }

    #[test]
    fn parse_product() {
        let e = parse("sin(q1)*p1").unwrap();
        assert!(matches!(e, Expr::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn parse_error_offset() {
        let err = parse("q1 + * p1").unwrap_err();
        assert_eq!(err.offset, 5);
    }

    #[test]
    fn unknown_function() {
        let err = parse("sinh(q1)").unwrap_err();
        assert!(err.message.contains("unknown function"), "{err}");
    }

    #[test]
    fn eval_product() {
        let e = parse("q1*p1").unwrap();
        assert_eq!(e.eval(&bind(&[("q1", 2.0), ("p1", 3.0)])).unwrap(), 6.0);
    }

    #[test]
    fn eval_domain_error() {
        let e = parse("sqrt(q1)").unwrap();
        let err = e.eval(&bind(&[("q1", -1.0)])).unwrap_err();
        assert!(matches!(err, EvalError::Domain { op: "sqrt", .. }));
    }

    #[test]
    fn eval_exp_zero() {
        let e = parse("exp(0)").unwrap();
        assert_eq!(e.eval(&Binding::new()).unwrap(), 1.0);
    }

    #[test]
    fn eval_unbound() {
        let e = parse("q1 + q2").unwrap();
        let err = e.eval(&bind(&[("q1", 1.0)])).unwrap_err();
        assert_eq!(err, EvalError::Unbound("q2".into()));
    }

    #[test]
    fn diff_power_rule() {
        let d = parse("q1^2").unwrap().diff("q1");
        assert_eq!(d, parse("2*q1").unwrap());
    }

    #[test]
    fn diff_independent_variable() {
        let d = parse("p1").unwrap().diff("q1");
        assert!(d.is_zero());
    }

    #[test]
    fn diff_matches_finite_difference() {
        // central FD oracle at q1=0, p1=2
        let e = parse("sin(q1)*p1").unwrap();
        let d = e.diff("q1");
        let b = bind(&[("q1", 0.0), ("p1", 2.0)]);
        let h = 1e-6;
        let plus = e.eval(&bind(&[("q1", h), ("p1", 2.0)])).unwrap();
        let minus = e.eval(&bind(&[("q1", -h), ("p1", 2.0)])).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let sym = d.eval(&b).unwrap();
        assert!((sym - fd).abs() <= 1e-5 * (1.0 + fd.abs()));
        assert_eq!(sym, 2.0);
    }

    #[test]
    fn diff_of_constant_expression_is_zero() {
        let e = parse("3 + exp(1)").unwrap();
        assert!(e.diff("q1").is_zero());
    }

    #[test]
    fn pow_non_integer_requires_positive_base() {
        let e = parse("q1^0.5").unwrap();
        assert!(e.eval(&bind(&[("q1", -2.0)])).is_err());
        assert!((e.eval(&bind(&[("q1", 4.0)])).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn print_parse_round_trip() {
        for text in [
            "p1^2/2 + q1^2/2",
            "-(q1 + p1)*sin(q1)",
            "q1^2^3",
            "1/(q1 - p1)/2",
            "sqrt(q1 + 1) - exp(-q1)",
            "q1^(-2)",
        ] {
            let e = parse(text).unwrap();
            let reparsed = parse(&e.to_string()).unwrap();
            assert_eq!(e, reparsed, "round trip failed for `{text}` -> `{e}`");
        }
    }

    #[test]
    fn substitute_is_simultaneous() {
        let e = parse("q1 + p1").unwrap();
        let mut subs = HashMap::new();
        subs.insert("q1".to_string(), parse("p1").unwrap());
        subs.insert("p1".to_string(), parse("q1").unwrap());
        let swapped = e.substitute_all(&subs);
        assert_eq!(swapped, parse("p1 + q1").unwrap());
    }

    #[test]
    fn free_vars_finite() {
        let e = parse("sin(q1)*p2 + t").unwrap();
        let vars: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(vars, ["p2", "q1", "t"]);
    }

    #[test]
    fn exponent_must_be_constant() {
        assert!(parse("q1^p1").is_err());
        // parenthesized constant expressions fold to a constant exponent
        let e = parse("q1^(1 + 1)").unwrap();
        assert_eq!(e, Expr::pow(Expr::var("q1"), 2.0));
    }
}
