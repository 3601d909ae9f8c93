//! Scalar expression trees over named coordinates.
//!
//! Expressions are parsed from a small grammar (numbers, identifiers,
//! `+ - * / ^`, unary minus, and the functions `sin cos exp log sqrt`),
//! evaluated in IEEE double precision, and differentiated symbolically.
//! Symbolic derivatives are the primary derivative engine throughout the
//! crate; finite differences appear only as a cross-check in tests.
//!
//! Trees are immutable after construction and cheap to clone (shared
//! subtrees via `Arc`), so concurrent evaluation is safe.

mod field;
mod parse;

pub use field::{BindError, EvalError, EvalErrorKind, ScalarField};
pub use parse::{parse, ParseError};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression AST. `Pow` exponents are restricted to constant subtrees;
/// the parser and [`ScalarField`] construction both enforce this.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinOp, Arc<Expr>, Arc<Expr>),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// True when the subtree references no variables.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Unary(_, a) => a.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    // Smart constructors. These fold constants where the result is finite
    // and drop algebraically trivial factors; they are used when building
    // derived expressions (derivatives, pushforwards), never by the parser.

    pub fn neg(a: Expr) -> Expr {
        if let Some(v) = a.as_num() {
            return Expr::Num(-v);
        }
        if let Expr::Unary(UnaryOp::Neg, inner) = &a {
            return (**inner).clone();
        }
        Expr::Unary(UnaryOp::Neg, Arc::new(a))
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        if let Some(v) = a.as_num() {
            let folded = match op {
                UnaryOp::Neg => unreachable!(),
                UnaryOp::Sin => v.sin(),
                UnaryOp::Cos => v.cos(),
                UnaryOp::Exp => v.exp(),
                UnaryOp::Log => v.ln(),
                UnaryOp::Sqrt => v.sqrt(),
            };
            if folded.is_finite() {
                return Expr::Num(folded);
            }
        }
        Expr::Unary(op, Arc::new(a))
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Sin, a)
    }
    pub fn cos(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Cos, a)
    }
    pub fn exp(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Exp, a)
    }
    pub fn log(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Log, a)
    }
    pub fn sqrt(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Sqrt, a)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if (x + y).is_finite() => return Expr::Num(x + y),
            (Some(0.0), _) => return b,
            (_, Some(0.0)) => return a,
            _ => {}
        }
        Expr::Binary(BinOp::Add, Arc::new(a), Arc::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if (x - y).is_finite() => return Expr::Num(x - y),
            (Some(0.0), _) => return Expr::neg(b),
            (_, Some(0.0)) => return a,
            _ => {}
        }
        Expr::Binary(BinOp::Sub, Arc::new(a), Arc::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if (x * y).is_finite() => return Expr::Num(x * y),
            (Some(0.0), _) => return Expr::Num(0.0),
            (_, Some(0.0)) => return Expr::Num(0.0),
            (Some(1.0), _) => return b,
            (_, Some(1.0)) => return a,
            _ => {}
        }
        Expr::Binary(BinOp::Mul, Arc::new(a), Arc::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => return Expr::Num(x / y),
            (Some(0.0), _) => return Expr::Num(0.0),
            (_, Some(1.0)) => return a,
            _ => {}
        }
        Expr::Binary(BinOp::Div, Arc::new(a), Arc::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if x.powf(y).is_finite() => return Expr::Num(x.powf(y)),
            (_, Some(1.0)) => return a,
            (_, Some(0.0)) => return Expr::Num(1.0),
            _ => {}
        }
        Expr::Binary(BinOp::Pow, Arc::new(a), Arc::new(b))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinOp::Add => Expr::add(a, b),
            BinOp::Sub => Expr::sub(a, b),
            BinOp::Mul => Expr::mul(a, b),
            BinOp::Div => Expr::div(a, b),
            BinOp::Pow => Expr::pow(a, b),
        }
    }

    /// Exact symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(n) => {
                if n == var {
                    Expr::Num(1.0)
                } else {
                    Expr::Num(0.0)
                }
            }
            Expr::Unary(op, a) => {
                let da = a.differentiate(var);
                match op {
                    UnaryOp::Neg => Expr::neg(da),
                    UnaryOp::Sin => Expr::mul(Expr::cos((**a).clone()), da),
                    UnaryOp::Cos => Expr::neg(Expr::mul(Expr::sin((**a).clone()), da)),
                    UnaryOp::Exp => Expr::mul(Expr::exp((**a).clone()), da),
                    UnaryOp::Log => Expr::div(da, (**a).clone()),
                    UnaryOp::Sqrt => {
                        Expr::div(da, Expr::mul(Expr::Num(2.0), Expr::sqrt((**a).clone())))
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (&**a, &**b);
                match op {
                    BinOp::Add => Expr::add(a.differentiate(var), b.differentiate(var)),
                    BinOp::Sub => Expr::sub(a.differentiate(var), b.differentiate(var)),
                    BinOp::Mul => Expr::add(
                        Expr::mul(a.differentiate(var), b.clone()),
                        Expr::mul(a.clone(), b.differentiate(var)),
                    ),
                    BinOp::Div => Expr::div(
                        Expr::sub(
                            Expr::mul(a.differentiate(var), b.clone()),
                            Expr::mul(a.clone(), b.differentiate(var)),
                        ),
                        Expr::pow(b.clone(), Expr::Num(2.0)),
                    ),
                    // Exponents are constant subtrees, so only the base rule applies.
                    BinOp::Pow => Expr::mul(
                        Expr::mul(
                            b.clone(),
                            Expr::pow(a.clone(), Expr::sub(b.clone(), Expr::Num(1.0))),
                        ),
                        a.differentiate(var),
                    ),
                }
            }
        }
    }

    /// Replace every variable that appears in `map` by the mapped expression.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(n) => match map.get(n) {
                Some(e) => e.clone(),
                None => Expr::Var(n.clone()),
            },
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(map)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(map), b.substitute(map)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            // Sign-bit test so -0.0 prints parenthesized like any other
            // negative literal; a bare leading '-' would reparse as a
            // unary minus around the enclosing operation.
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Num(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(..) => 5,
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Binary(BinOp::Pow, ..) => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({})", self)
        } else {
            write!(f, "{}", self)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{}", v),
            Expr::Var(n) => write!(f, "{}", n),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                a.fmt_child(f, 3)
            }
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Neg => unreachable!(),
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                    UnaryOp::Sqrt => "sqrt",
                };
                write!(f, "{}({})", name, a)
            }
            Expr::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                match op {
                    // ^ is right-associative: parenthesize a pow on the left.
                    BinOp::Pow => {
                        a.fmt_child(f, prec + 1)?;
                        write!(f, "{}", sym)?;
                        b.fmt_child(f, prec)
                    }
                    // Left-associative: an equal-precedence right child
                    // must keep its parentheses so the reparse preserves
                    // the association (float arithmetic is not
                    // associative).
                    _ => {
                        a.fmt_child(f, prec)?;
                        write!(f, "{}", sym)?;
                        b.fmt_child(f, prec + 1)
                    }
                }
            }
        }
    }
}
