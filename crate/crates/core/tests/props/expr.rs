use fricsym_core::expr::random_expr;
use fricsym_core::{simplify, Expr, FunctionSet, Matrix, UnaryFn};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check, Property};

pub const PROPERTIES: &[(&str, Property)] = &[
    ("expr: evaluation is deterministic", evaluation_purity),
    ("expr: simplify preserves values", simplify_soundness),
    ("expr: subtree complexity bounded by parent", complexity_monotone),
    ("expr: parse of display is equivalent", parse_round_trip),
    ("expr: sign(0) = 0 and sqrt-abs is even", sign_and_sqrt_abs),
];

pub fn tree(seed: u64, depth: usize, arity: usize, fset: &FunctionSet) -> Expr {
    random_expr(&mut ChaCha8Rng::seed_from_u64(seed), depth, arity, fset)
}

fn inputs(arity: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, arity), 1..8)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn evaluation_purity(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 1..7usize, inputs(3)), |(seed, depth, rows)| {
        let e = tree(seed, depth, 3, &FunctionSet::permissive());
        let x = Matrix::from_rows(&rows);
        let a = e.evaluate(&x).unwrap();
        let b = e.evaluate(&x).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        Ok(())
    })
}

pub fn simplify_soundness(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 1..7usize, inputs(2)), |(seed, depth, rows)| {
        let e = tree(seed, depth, 2, &FunctionSet::permissive());
        let s = simplify(&e);
        for row in &rows {
            let (a, b) = (e.eval_row(row), s.eval_row(row));
            if a.is_finite() && b.is_finite() {
                prop_assert!(close(a, b, 1e-9), "{e} -> {s} at {row:?}: {a} vs {b}");
            }
        }
        Ok(())
    })
}

pub fn complexity_monotone(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 1..8usize), |(seed, depth)| {
        let e = tree(seed, depth, 3, &FunctionSet::permissive());
        let c = e.complexity();
        for i in 0..e.size() {
            let sub = e.node(i).unwrap();
            prop_assert!(sub.complexity() <= c, "{sub} inside {e}");
        }
        Ok(())
    })
}

pub fn parse_round_trip(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 1..7usize, inputs(3)), |(seed, depth, rows)| {
        let e = tree(seed, depth, 3, &FunctionSet::permissive());
        let back: Expr = e.to_string().parse().map_err(|err| TestCaseError::fail(format!("{e}: {err}")))?;
        for row in &rows {
            let (a, b) = (e.eval_row(row), back.eval_row(row));
            prop_assert!(a.to_bits() == b.to_bits() || close(a, b, 1e-12), "{e} vs {back}");
        }
        Ok(())
    })
}

pub fn sign_and_sqrt_abs(cases: u32) -> Result<(), String> {
    check(cases, -1e6..1e6f64, |v| {
        let sgn = Expr::unary(UnaryFn::Sign, Expr::Var(0));
        prop_assert_eq!(sgn.eval_row(&[0.0]), 0.0);
        prop_assert_eq!(sgn.eval_row(&[-0.0]), 0.0);
        let r = Expr::unary(UnaryFn::SqrtAbs, Expr::Var(0));
        prop_assert_eq!(r.eval_row(&[v]), r.eval_row(&[-v]));
        Ok(())
    })
}
