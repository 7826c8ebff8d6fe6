use fricsym_core::numopt::BasinHoppingConfig;
use fricsym_core::parfam::{monomials, parfam_eval, parfam_extract, parfam_fit, Degrees, ParFamFitConfig, ParFamStructure};
use fricsym_core::expr::sign;
use fricsym_core::{Matrix, UnaryFn};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::{check, Property};

pub const PROPERTIES: &[(&str, Property)] = &[
    ("parfam: extracted formula matches evaluation", extract_consistency),
    ("parfam: pruning never grows the support", sparsification_monotone),
    ("parfam: affine structure solves least squares", identity_subcase),
    ("parfam: odd monomials of odd inputs give odd functions", odd_symmetry),
];

fn structure() -> impl Strategy<Value = ParFamStructure> {
    let base = prop::sample::select(vec![UnaryFn::Exp, UnaryFn::SqrtAbs, UnaryFn::Abs, UnaryFn::Sign]);
    (1..3usize, prop::collection::vec((base, 0..3u32, 0..2u32), 0..3), 1..4u32, 0..2u32).prop_map(|(arity, inner, on, od)| {
        let (base, inner): (Vec<_>, Vec<_>) = inner.into_iter().map(|(g, n, d)| (g, Degrees::new(n, d))).unzip();
        ParFamStructure::new(arity, base, inner, Degrees::new(on, od)).unwrap()
    })
}

fn rows(arity: usize, n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(lo..hi, arity), n)
}

/// Least squares through the normal equations.
pub fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j < p { x.get(i, j) } else { 1.0 });
    let b = DVector::from_column_slice(y);
    let at = a.transpose();
    let sol = (&at * &a).lu().solve(&(&at * b)).expect("well-conditioned design");
    sol.iter().copied().collect()
}

pub fn extract_consistency(cases: u32) -> Result<(), String> {
    let strategy = structure().prop_flat_map(|s| {
        let n = s.n_params();
        let theta = prop::collection::vec((-0.3..0.3f64, prop::bool::weighted(0.2)), n);
        (Just(s.clone()), theta, rows(s.arity, 6, -1.5, 1.5))
    });
    check(cases, strategy, |(s, theta, rows)| {
        let tol = 1e-6;
        // Some coefficients sit just below the tolerance and must vanish.
        let theta: Vec<f64> = theta.iter().map(|(v, tiny)| if *tiny { v * 1e-6 } else { *v }).collect();
        let zeroed: Vec<f64> = theta.iter().map(|v| if v.abs() < tol { 0.0 } else { *v }).collect();
        let x = Matrix::from_rows(&rows);
        let e = parfam_extract(&s, &theta, tol).unwrap();
        let want = parfam_eval(&s, &zeroed, &x).unwrap();
        for (row, w) in rows.iter().zip(want) {
            let got = e.eval_row(row);
            if w.is_finite() {
                prop_assert!((got - w).abs() <= 1e-9 * w.abs().max(1.0), "{e}: {got} vs {w}");
            }
        }
        Ok(())
    })
}

fn quick_cfg(seed: u64) -> ParFamFitConfig {
    ParFamFitConfig {
        basin: BasinHoppingConfig { iterations: 2, step_size: 0.5, temperature: 0.01, local_budget: 150, ..Default::default() },
        finetune_budget: 150,
        seed,
        ..ParFamFitConfig::default()
    }
}

pub fn sparsification_monotone(cases: u32) -> Result<(), String> {
    let strategy = (1..3usize, 1..3u32, prop::bool::ANY, any::<u64>(), prop::collection::vec(-2.0..2.0f64, 3)).prop_flat_map(
        |(arity, deg, with_exp, seed, c)| (Just((arity, deg, with_exp, seed, c)), rows(arity, 15, -2.0, 2.0)),
    );
    check(cases, strategy, |((arity, deg, with_exp, seed, c), rows)| {
        let s = if with_exp {
            ParFamStructure::new(arity, vec![UnaryFn::Exp], vec![Degrees::new(1, 0)], Degrees::new(deg, 0)).unwrap()
        } else {
            ParFamStructure::polynomial(arity, deg)
        };
        let y: Vec<f64> = rows.iter().map(|r| c[0] + c[1] * r[0] + c[2] * r[0].abs().sqrt()).collect();
        let fit = parfam_fit(&Matrix::from_rows(&rows), &y, &s, &quick_cfg(seed)).unwrap();
        let counts: Vec<usize> = fit.report.stages.iter().map(|st| st.nonzeros).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        prop_assert_eq!(fit.report.nonzeros, *counts.last().unwrap());
        prop_assert!(fit.report.nonzeros <= s.n_params());
        Ok(())
    })
}

/// Affine problems with coefficients well away from the pruning thresholds.
pub fn affine_problem() -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    let coef = (prop::bool::ANY, 0.5..3.0f64).prop_map(|(neg, v)| if neg { -v } else { v });
    (1..4usize).prop_flat_map(move |arity| {
        (rows(arity, 30, -2.0, 2.0), prop::collection::vec(coef.clone(), arity + 1), prop::collection::vec(-0.05..0.05f64, 30))
            .prop_map(move |(rows, c, noise)| {
                let y = rows
                    .iter()
                    .zip(&noise)
                    .map(|(r, e)| r.iter().zip(&c).map(|(x, w)| x * w).sum::<f64>() + c[c.len() - 1] + e)
                    .collect();
                (Matrix::from_rows(&rows), y)
            })
    })
}

pub fn identity_subcase(cases: u32) -> Result<(), String> {
    check(cases, (affine_problem(), any::<u64>()), |((x, y), seed)| {
        let s = ParFamStructure::new(x.n_cols(), vec![], vec![], Degrees::new(1, 0)).unwrap();
        let fit = parfam_fit(&x, &y, &s, &ParFamFitConfig { seed, ..ParFamFitConfig::default() }).unwrap();
        let oracle = ols_oracle(&x, &y);
        // Outer monomials run x0..x_{n-1} then the constant, as in the oracle.
        prop_assert_eq!(monomials(x.n_cols(), 1).last().unwrap().iter().sum::<u32>(), 0);
        for (a, b) in fit.theta.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", fit.theta, oracle);
        }
        Ok(())
    })
}

pub fn odd_symmetry(cases: u32) -> Result<(), String> {
    let s = ParFamStructure::polynomial(2, 3);
    let monos = monomials(2, 3);
    let strategy = (prop::collection::vec(-3.0..3.0f64, monos.len()), -2.0..2.0f64);
    check(cases, strategy, |(theta, v)| {
        let theta: Vec<f64> = theta.iter().zip(&monos).map(|(t, m)| if m.iter().sum::<u32>() % 2 == 1 { *t } else { 0.0 }).collect();
        let x = Matrix::from_rows(&[[v, sign(v)], [-v, -sign(v)]]);
        let f = parfam_eval(&s, &theta, &x).unwrap();
        prop_assert_eq!(f[1], -f[0]);
        Ok(())
    })
}
