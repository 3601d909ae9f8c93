//! Expression-level properties: symbolic derivatives against a central
//! finite-difference oracle, and print/parse round trips.

use pdtk::chart::Chart;
use pdtk::expr::{parse, BinOp, Expr, ScalarField, UnaryOp};
use pdtk::rng::SplitMix64;
use proptest::prelude::*;
use std::sync::Arc;

const CORPUS: &[&str] = &[
    "x*y",
    "x^2",
    "x*y*z*w",
    "sin(x)*cos(y)",
    "exp(x/2) + log(3+x)",
    "sqrt(5+y^2)",
    "1/(1+0.01*4*x*y)",
    "(x+y)^3",
    "-x^2 + sin(y)",
    "x^-2 + y",
    "cos(x*y) - x/(3+z)",
    "exp(-(x^2+y^2)/4)",
];

fn chart4() -> Arc<Chart> {
    Chart::new(["x", "y", "z", "w"]).unwrap()
}

/// Central finite difference, the independent oracle for the symbolic
/// derivative.
fn central_fd(f: &ScalarField, var_index: usize, p: &[f64], h: f64) -> Option<f64> {
    let mut hi = p.to_vec();
    let mut lo = p.to_vec();
    hi[var_index] += h;
    lo[var_index] -= h;
    let a = f.eval(&hi).ok()?;
    let b = f.eval(&lo).ok()?;
    Some((a - b) / (2.0 * h))
}

#[test]
fn symbolic_derivative_matches_finite_differences() {
    let chart = chart4();
    let mut rng = SplitMix64::new(0);
    for text in CORPUS {
        let f = ScalarField::parse(&chart, text).unwrap();
        for (vi, var) in chart.names().iter().enumerate() {
            let df = f.differentiate(var).unwrap();
            let mut checked = 0;
            while checked < 100 {
                let p = rng.point(4, -2.0, 2.0);
                let Some(fd) = central_fd(&f, vi, &p, 1e-6) else {
                    continue;
                };
                let Ok(sym) = df.eval(&p) else { continue };
                // Avoid points where the oracle itself is ill-conditioned.
                if !fd.is_finite() || fd.abs() > 1e6 {
                    continue;
                }
                checked += 1;
                assert!(
                    (sym - fd).abs() <= 1e-5 * (1.0 + sym.abs()),
                    "{text} d/d{var} at {p:?}: symbolic {sym} vs FD {fd}"
                );
            }
        }
    }
}

#[test]
fn parsing_is_deterministic() {
    for text in CORPUS {
        let a = parse(text).unwrap();
        let b = parse(text).unwrap();
        assert_eq!(
            a, b,
            "identical input must give structurally identical trees"
        );
    }
}

// Generator for ASTs whose pow exponents are integer constants.
fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-4.0..4.0f64).prop_map(|v| Expr::Num((v * 16.0).round() / 16.0)),
        prop_oneof![Just("x"), Just("y")].prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), any::<u8>()).prop_map(|(a, b, op)| {
                let op = match op % 4 {
                    0 => BinOp::Add,
                    1 => BinOp::Sub,
                    2 => BinOp::Mul,
                    _ => BinOp::Div,
                };
                Expr::Binary(op, a.into(), b.into())
            }),
            (inner.clone(), -3..=3i32).prop_map(|(a, e)| Expr::Binary(
                BinOp::Pow,
                a.into(),
                Arc::new(Expr::Num(e as f64))
            )),
            (inner, any::<u8>()).prop_map(|(a, op)| {
                let op = match op % 6 {
                    0 => UnaryOp::Neg,
                    1 => UnaryOp::Sin,
                    2 => UnaryOp::Cos,
                    3 => UnaryOp::Exp,
                    4 => UnaryOp::Log,
                    _ => UnaryOp::Sqrt,
                };
                Expr::Unary(op, a.into())
            }),
        ]
    })
}

proptest! {
    // parse(print(ast)) evaluates identically to ast, bit for bit.
    #[test]
    fn print_parse_round_trip_evaluates_identically(ast in arb_expr()) {
        let chart = Chart::new(["x", "y"]).unwrap();
        let printed = ast.to_string();
        let reparsed = parse(&printed)
            .unwrap_or_else(|e| panic!("printed form {printed:?} failed to parse: {e}"));
        let original = ScalarField::new(chart.clone(), ast).unwrap();
        let round = ScalarField::new(chart, reparsed).unwrap();
        for p in [[0.3, 0.7], [-1.2, 0.4], [2.0, -2.0], [0.0, 1.0]] {
            match (original.eval(&p), round.eval(&p)) {
                (Ok(a), Ok(b)) => prop_assert!(
                    a == b || (a.is_nan() && b.is_nan()),
                    "{printed}: {a} vs {b} at {p:?}"
                ),
                (Err(a), Err(b)) => prop_assert_eq!(a.kind, b.kind),
                (a, b) => prop_assert!(false, "{}: {:?} vs {:?} at {:?}", printed, a, b, p),
            }
        }
    }

    // The derivative of any generated expression agrees with the FD
    // oracle wherever both are well behaved.
    #[test]
    fn derivative_oracle_on_generated_expressions(ast in arb_expr(), x in -1.5..1.5f64, y in -1.5..1.5f64) {
        let chart = Chart::new(["x", "y"]).unwrap();
        let f = ScalarField::new(chart, ast).unwrap();
        let p = [x, y];
        let df = f.differentiate("x").unwrap();
        if let (Some(fd), Ok(sym)) = (central_fd(&f, 0, &p, 1e-6), df.eval(&p)) {
            // Skip wildly scaled points; the FD oracle loses digits there.
            if fd.is_finite() && fd.abs() < 1e4 && sym.abs() < 1e4 {
                prop_assert!(
                    (sym - fd).abs() <= 1e-4 * (1.0 + sym.abs()),
                    "{} at {:?}: symbolic {} vs FD {}", f, p, sym, fd
                );
            }
        }
    }
}
