//! Scalar fields: an expression bound to a coordinate chart.
//!
//! Binding resolves every variable to its chart index up front, so
//! unbound names fail at construction and evaluation never touches a
//! name table. Evaluation is IEEE double precision and deterministic.

use super::{BinOp, Expr, UnaryOp};
use crate::chart::Chart;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("expression references '{0}', which is not a chart coordinate")]
    UnboundVariable(String),
    #[error("pow exponent must be a constant expression")]
    NonConstantExponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    LogNonPositive,
    SqrtNegative,
    DivisionByZero,
    PowDomain,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalErrorKind::LogNonPositive => write!(f, "log of non-positive value"),
            EvalErrorKind::SqrtNegative => write!(f, "sqrt of negative value"),
            EvalErrorKind::DivisionByZero => write!(f, "division by zero"),
            EvalErrorKind::PowDomain => write!(f, "pow outside real domain"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} in sub-expression `{subexpr}`")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    /// Printable form of the offending sub-expression.
    pub subexpr: String,
}

/// Expression compiled against a chart: variables are indices into the
/// evaluation point. `PowI` covers constant integer exponents.
#[derive(Debug, Clone)]
enum Prog {
    Num(f64),
    Var(usize),
    Unary(UnaryOp, Box<Prog>),
    Binary(BinOp, Box<Prog>, Box<Prog>),
    PowI(Box<Prog>, i32),
}

fn compile(expr: &Expr, chart: &Chart) -> Result<Prog, BindError> {
    Ok(match expr {
        Expr::Num(v) => Prog::Num(*v),
        Expr::Var(n) => Prog::Var(
            chart
                .index_of(n)
                .ok_or_else(|| BindError::UnboundVariable(n.clone()))?,
        ),
        Expr::Unary(op, a) => Prog::Unary(*op, Box::new(compile(a, chart)?)),
        Expr::Binary(BinOp::Pow, a, b) => {
            if !b.is_constant() {
                return Err(BindError::NonConstantExponent);
            }
            let base = Box::new(compile(a, chart)?);
            let exp = Box::new(compile(b, chart)?);
            // A constant subtree evaluates without a point.
            if let Ok(e) = eval_prog(&exp, &[]) {
                if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                    return Ok(Prog::PowI(base, e as i32));
                }
            }
            Prog::Binary(BinOp::Pow, base, exp)
        }
        Expr::Binary(op, a, b) => Prog::Binary(
            *op,
            Box::new(compile(a, chart)?),
            Box::new(compile(b, chart)?),
        ),
    })
}

fn render(prog: &Prog, chart: &Chart) -> String {
    match prog {
        Prog::Num(v) => format!("{}", v),
        Prog::Var(i) => chart.name(*i).to_string(),
        Prog::Unary(UnaryOp::Neg, a) => format!("-({})", render(a, chart)),
        Prog::Unary(op, a) => {
            let name = match op {
                UnaryOp::Neg => unreachable!(),
                UnaryOp::Sin => "sin",
                UnaryOp::Cos => "cos",
                UnaryOp::Exp => "exp",
                UnaryOp::Log => "log",
                UnaryOp::Sqrt => "sqrt",
            };
            format!("{}({})", name, render(a, chart))
        }
        Prog::Binary(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            format!("({}){}({})", render(a, chart), sym, render(b, chart))
        }
        Prog::PowI(a, e) => format!("({})^{}", render(a, chart), e),
    }
}

fn eval_prog(prog: &Prog, point: &[f64]) -> Result<f64, EvalErrorKind> {
    match prog {
        Prog::Num(v) => Ok(*v),
        Prog::Var(i) => Ok(point[*i]),
        Prog::Unary(op, a) => {
            let x = eval_prog(a, point)?;
            match op {
                UnaryOp::Neg => Ok(-x),
                UnaryOp::Sin => Ok(x.sin()),
                UnaryOp::Cos => Ok(x.cos()),
                UnaryOp::Exp => Ok(x.exp()),
                UnaryOp::Log => {
                    if x <= 0.0 {
                        Err(EvalErrorKind::LogNonPositive)
                    } else {
                        Ok(x.ln())
                    }
                }
                UnaryOp::Sqrt => {
                    if x < 0.0 {
                        Err(EvalErrorKind::SqrtNegative)
                    } else {
                        Ok(x.sqrt())
                    }
                }
            }
        }
        Prog::Binary(op, a, b) => {
            let x = eval_prog(a, point)?;
            let y = eval_prog(b, point)?;
            match op {
                BinOp::Add => Ok(x + y),
                BinOp::Sub => Ok(x - y),
                BinOp::Mul => Ok(x * y),
                BinOp::Div => {
                    if y == 0.0 {
                        Err(EvalErrorKind::DivisionByZero)
                    } else {
                        Ok(x / y)
                    }
                }
                BinOp::Pow => {
                    if x == 0.0 && y < 0.0 {
                        Err(EvalErrorKind::DivisionByZero)
                    } else if x < 0.0 && y.fract() != 0.0 {
                        Err(EvalErrorKind::PowDomain)
                    } else {
                        Ok(x.powf(y))
                    }
                }
            }
        }
        Prog::PowI(a, e) => {
            let x = eval_prog(a, point)?;
            if x == 0.0 && *e < 0 {
                Err(EvalErrorKind::DivisionByZero)
            } else {
                Ok(x.powi(*e))
            }
        }
    }
}

// Locate the shallowest failing sub-program so errors name the culprit.
fn locate_error<'p>(prog: &'p Prog, point: &[f64], kind: EvalErrorKind) -> &'p Prog {
    let children: Vec<&Prog> = match prog {
        Prog::Num(_) | Prog::Var(_) => vec![],
        Prog::Unary(_, a) | Prog::PowI(a, _) => vec![a],
        Prog::Binary(_, a, b) => vec![a, b],
    };
    for child in children {
        if let Err(k) = eval_prog(child, point) {
            return locate_error(child, point, k);
        }
    }
    let _ = kind;
    prog
}

/// A smooth function on a chart: an expression plus its compiled form.
///
/// Free variables are a subset of the chart coordinates, checked at
/// construction. Immutable afterwards; safe to share across threads.
#[derive(Debug, Clone)]
pub struct ScalarField {
    chart: Arc<Chart>,
    expr: Expr,
    prog: Prog,
}

impl ScalarField {
    pub fn new(chart: Arc<Chart>, expr: Expr) -> Result<Self, BindError> {
        let prog = compile(&expr, &chart)?;
        Ok(ScalarField { chart, expr, prog })
    }

    pub fn parse(chart: &Arc<Chart>, text: &str) -> Result<Self, super::ParseError> {
        let expr = super::parse(text)?;
        ScalarField::new(chart.clone(), expr).map_err(|e| super::ParseError {
            offset: 0,
            message: e.to_string(),
        })
    }

    pub fn constant(chart: Arc<Chart>, value: f64) -> Self {
        ScalarField::new(chart, Expr::Num(value)).expect("constants always bind")
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Evaluate at a point of the chart (dimension must match).
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        assert_eq!(
            point.len(),
            self.chart.dim(),
            "point dimension {} does not match chart {}",
            point.len(),
            self.chart
        );
        eval_prog(&self.prog, point).map_err(|kind| {
            let node = locate_error(&self.prog, point, kind);
            EvalError {
                kind,
                subexpr: render(node, &self.chart),
            }
        })
    }

    /// Exact symbolic partial derivative with respect to a chart coordinate.
    pub fn differentiate(&self, var: &str) -> Result<ScalarField, BindError> {
        if self.chart.index_of(var).is_none() {
            return Err(BindError::UnboundVariable(var.to_string()));
        }
        ScalarField::new(self.chart.clone(), self.expr.differentiate(var))
    }

    /// All partials, in chart coordinate order.
    pub fn gradient_fields(&self) -> Vec<ScalarField> {
        self.chart
            .names()
            .iter()
            .map(|n| {
                ScalarField::new(self.chart.clone(), self.expr.differentiate(n))
                    .expect("derivative binds on the same chart")
            })
            .collect()
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}
