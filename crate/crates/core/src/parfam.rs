//! Parametric-family symbolic regression.
//!
//! A candidate is `Q_{k+1}(x, g_1(Q_1(x)), ..., g_k(Q_k(x)))` where every `Q_i`
//! is a rational function with denominator `1 + D_i` and the `g_i` are unary
//! base functions. Fitting minimizes MSE plus an L1 penalty and then prunes
//! small coefficients.
//!
//! The outer numerator enters the model linearly, so the fit solves for it
//! exactly (lasso or least squares) inside the objective and leaves only the
//! inner and denominator coefficients to basin-hopping.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{BinaryOp, Expr, UnaryFn};
use crate::numopt::{basin_hopping, local_minimize, BasinHoppingConfig, Objective, OptError, INVALID};
use crate::Matrix;

/// Largest |argument| passed to `exp` during evaluation.
pub const EXP_CLAMP: f64 = 50.0;

#[derive(Debug, Error)]
pub enum ParFamError {
    #[error("coefficient vector has length {got}, structure needs {expected}")]
    ThetaLength { expected: usize, got: usize },
    #[error("input has {got} columns, structure expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("training data is empty")]
    EmptyData,
    #[error("{rows} input rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Optimizer(#[from] OptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degrees {
    pub numerator: u32,
    pub denominator: u32,
}

impl Degrees {
    pub const fn new(numerator: u32, denominator: u32) -> Self {
        Self { numerator, denominator }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParFamStructure {
    pub arity: usize,
    /// Base functions `g_1..g_k`.
    pub base: Vec<UnaryFn>,
    /// Degrees of the inner rationals `Q_1..Q_k`, one per base function.
    pub inner: Vec<Degrees>,
    /// Degrees of the outer rational over the inputs and the `k` inner outputs.
    pub outer: Degrees,
}

/// Exponent tuples of all monomials of total degree at most `degree`, highest
/// degree first; the constant monomial is last.
pub fn monomials(vars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(vars: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == vars {
            prefix.push(deg);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=deg).rev() {
            prefix.push(e);
            fill(vars, deg - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for deg in (0..=degree).rev() {
        if vars == 0 {
            if deg == 0 {
                out.push(Vec::new());
            }
            continue;
        }
        fill(vars, deg, &mut Vec::with_capacity(vars), &mut out);
    }
    out
}

#[derive(Debug, Clone)]
struct Rational {
    num: Vec<Vec<u32>>,
    /// Non-constant denominator monomials; the constant is fixed at 1.
    den: Vec<Vec<u32>>,
    offset: usize,
}

impl Rational {
    fn new(vars: usize, d: Degrees, offset: usize) -> Self {
        let num = monomials(vars, d.numerator);
        let mut den = monomials(vars, d.denominator);
        den.pop();
        Self { num, den, offset }
    }

    fn len(&self) -> usize {
        self.num.len() + self.den.len()
    }

    fn num_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.num.len()
    }

    fn den_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.num.len();
        start..start + self.den.len()
    }

    fn eval(&self, theta: &[f64], v: &[f64]) -> f64 {
        let num = poly(&self.num, &theta[self.num_range()], v);
        if self.den.is_empty() {
            num
        } else {
            num / (1.0 + poly(&self.den, &theta[self.den_range()], v))
        }
    }
}

fn monomial(exps: &[u32], v: &[f64]) -> f64 {
    exps.iter()
        .zip(v)
        .filter(|(e, _)| **e > 0)
        .map(|(e, x)| x.powi(*e as i32))
        .product()
}

fn poly(monos: &[Vec<u32>], coef: &[f64], v: &[f64]) -> f64 {
    monos
        .iter()
        .zip(coef)
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, c)| c * monomial(m, v))
        .sum()
}

fn apply_base(g: UnaryFn, a: f64) -> f64 {
    match g {
        UnaryFn::Exp => a.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
        _ => g.apply(a),
    }
}

#[derive(Debug, Clone)]
struct Layout {
    inner: Vec<Rational>,
    outer: Rational,
    total: usize,
}

impl ParFamStructure {
    pub fn new(arity: usize, base: Vec<UnaryFn>, inner: Vec<Degrees>, outer: Degrees) -> Result<Self, ParFamError> {
        let s = Self { arity, base, inner, outer };
        s.validate()?;
        Ok(s)
    }

    /// The friction default: two inner rationals under `exp` and `sqrt|.|`,
    /// all numerators of degree 2, no denominators.
    pub fn friction_default(arity: usize) -> Self {
        Self {
            arity,
            base: vec![UnaryFn::Exp, UnaryFn::SqrtAbs],
            inner: vec![Degrees::new(2, 0); 2],
            outer: Degrees::new(2, 0),
        }
    }

    /// A plain polynomial of the given degree (no base functions).
    pub fn polynomial(arity: usize, degree: u32) -> Self {
        Self { arity, base: Vec::new(), inner: Vec::new(), outer: Degrees::new(degree, 0) }
    }

    pub fn validate(&self) -> Result<(), ParFamError> {
        if self.base.len() != self.inner.len() {
            return Err(ParFamError::InvalidStructure(format!(
                "{} base functions but {} inner rationals",
                self.base.len(),
                self.inner.len()
            )));
        }
        if self.arity == 0 && self.base.is_empty() && self.outer.numerator > 0 {
            return Err(ParFamError::InvalidStructure("no inputs".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.base.len()
    }

    fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut inner = Vec::with_capacity(self.k());
        for d in &self.inner {
            let r = Rational::new(self.arity, *d, offset);
            offset += r.len();
            inner.push(r);
        }
        let outer = Rational::new(self.arity + self.k(), self.outer, offset);
        offset += outer.len();
        Layout { inner, outer, total: offset }
    }

    /// Total number of coefficients.
    pub fn n_params(&self) -> usize {
        self.layout().total
    }

    /// Index range of the outer numerator coefficients within `theta`.
    pub fn outer_numerator_range(&self) -> std::ops::Range<usize> {
        self.layout().outer.num_range()
    }
}

fn check_shapes(s: &ParFamStructure, theta: &[f64], x: &Matrix) -> Result<Layout, ParFamError> {
    let layout = s.layout();
    if theta.len() != layout.total {
        return Err(ParFamError::ThetaLength { expected: layout.total, got: theta.len() });
    }
    if x.n_cols() != s.arity {
        return Err(ParFamError::Arity { expected: s.arity, got: x.n_cols() });
    }
    Ok(layout)
}

/// Outer-layer inputs `[x, g_1(Q_1(x)), ...]` for one row.
fn extended_row(s: &ParFamStructure, layout: &Layout, theta: &[f64], row: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(row);
    for (g, q) in s.base.iter().zip(&layout.inner) {
        out.push(apply_base(*g, q.eval(theta, row)));
    }
}

pub fn parfam_eval(s: &ParFamStructure, theta: &[f64], x: &Matrix) -> Result<Vec<f64>, ParFamError> {
    let layout = check_shapes(s, theta, x)?;
    let mut ext = Vec::with_capacity(s.arity + s.k());
    Ok(x.rows()
        .map(|row| {
            extended_row(s, &layout, theta, &row, &mut ext);
            layout.outer.eval(theta, &ext)
        })
        .collect())
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(y) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        acc += (p - t) * (p - t);
    }
    let m = acc / y.len() as f64;
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

fn l1(theta: &[f64]) -> f64 {
    theta.iter().map(|v| v.abs()).sum()
}

/// MSE plus `lambda` times the L1 norm of `theta`; infinite when any
/// prediction is non-finite.
pub fn parfam_loss(s: &ParFamStructure, theta: &[f64], x: &Matrix, y: &[f64], lambda: f64) -> Result<f64, ParFamError> {
    let pred = parfam_eval(s, theta, x)?;
    if pred.len() != y.len() {
        return Err(ParFamError::LengthMismatch { rows: pred.len(), targets: y.len() });
    }
    let m = mse(&pred, y);
    Ok(if m.is_finite() { m + lambda * l1(theta) } else { f64::INFINITY })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParFamFitConfig {
    /// L1 weight of the stage-1 loss.
    pub lambda: f64,
    /// Search over the nonlinear coefficients. Its temperature is in units
    /// of the target variance.
    pub basin: BasinHoppingConfig,
    /// Increasing pruning thresholds.
    pub thresholds: Vec<f64>,
    /// Relative validation-MSE degradation a pruning stage may cause.
    pub max_degradation: f64,
    /// Absolute slack for that comparison, in units of the target variance;
    /// keeps exact fits from rejecting the removal of round-off coefficients.
    pub mse_slack: f64,
    /// Local-search budget for each re-fit after pruning.
    pub finetune_budget: usize,
    /// Fraction of samples held out for pruning decisions; 0 validates on
    /// the training data.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for ParFamFitConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            basin: BasinHoppingConfig {
                iterations: 20,
                step_size: 0.5,
                temperature: 0.01,
                local_budget: 1500,
                seed: 0,
                adapt_interval: Some(5),
                step_scales: Vec::new(),
            },
            thresholds: vec![1e-4, 1e-3, 1e-2, 3e-2, 0.1],
            max_degradation: 0.05,
            mse_slack: 1e-10,
            finetune_budget: 2000,
            validation_fraction: 0.0,
            seed: 0,
        }
    }
}

impl ParFamFitConfig {
    pub fn validate(&self) -> Result<(), ParFamError> {
        let bad = |m: &str| Err(ParFamError::InvalidConfig(m.into()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0)) || self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return bad("thresholds must be positive and increasing");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if !(self.max_degradation >= 0.0 && self.mse_slack >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        self.basin.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStage {
    pub threshold: f64,
    pub nonzeros: usize,
    pub validation_mse: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParFamReport {
    pub stage1_loss: f64,
    pub stage1_mse: f64,
    pub reference_validation_mse: f64,
    pub stages: Vec<PruneStage>,
    pub train_mse: f64,
    pub nonzeros: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParFamFit {
    pub theta: Vec<f64>,
    pub report: ParFamReport,
}

/// Which coefficients are free; frozen ones stay at zero.
struct Problem<'a> {
    s: &'a ParFamStructure,
    layout: Layout,
    x: &'a Matrix,
    y: &'a [f64],
    linear: Vec<usize>,
    nonlinear: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(s: &'a ParFamStructure, x: &'a Matrix, y: &'a [f64], active: &[bool]) -> Self {
        let layout = s.layout();
        let lin_range = layout.outer.num_range();
        let linear = lin_range.clone().filter(|&i| active[i]).collect();
        let nonlinear = (0..layout.total).filter(|&i| active[i] && !lin_range.contains(&i)).collect();
        Self { s, layout, x, y, linear, nonlinear }
    }

    /// Design matrix of the active outer-numerator monomials, already divided
    /// by the outer denominator. `None` when a value is non-finite.
    fn design(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.x.n_rows();
        let outer = &self.layout.outer;
        let base = outer.offset;
        let mut phi = DMatrix::zeros(n, self.linear.len());
        let mut ext = Vec::with_capacity(self.s.arity + self.s.k());
        for (r, row) in self.x.rows().enumerate() {
            extended_row(self.s, &self.layout, theta, &row, &mut ext);
            let den = if outer.den.is_empty() {
                1.0
            } else {
                1.0 + poly(&outer.den, &theta[outer.den_range()], &ext)
            };
            for (c, &j) in self.linear.iter().enumerate() {
                let v = monomial(&outer.num[j - base], &ext) / den;
                if !v.is_finite() {
                    return None;
                }
                phi[(r, c)] = v;
            }
        }
        Some(phi)
    }

    /// Solves for the linear coefficients given the nonlinear ones and
    /// returns the full coefficient vector and its MSE.
    fn solve(&self, theta_nl: &[f64], lambda: f64) -> Option<(Vec<f64>, f64)> {
        let mut theta = vec![0.0; self.layout.total];
        for (&i, v) in self.nonlinear.iter().zip(theta_nl) {
            theta[i] = *v;
        }
        let phi = self.design(&theta)?;
        let y = DVector::from_column_slice(self.y);
        let w = if self.linear.is_empty() {
            DVector::zeros(0)
        } else if lambda > 0.0 {
            lasso(&phi, &y, lambda)
        } else {
            least_squares(&phi, &y)?
        };
        for (&i, v) in self.linear.iter().zip(w.iter()) {
            theta[i] = *v;
        }
        let resid = &phi * &w - &y;
        let m = resid.norm_squared() / self.y.len() as f64;
        m.is_finite().then_some((theta, m))
    }

    fn loss(&self, theta_nl: &[f64], lambda: f64) -> f64 {
        match self.solve(theta_nl, lambda) {
            Some((theta, m)) => m + lambda * l1(&theta),
            None => INVALID,
        }
    }
}

fn least_squares(phi: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = phi.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * 1e-12 * phi.nrows().max(phi.ncols()) as f64;
    svd.solve(y, eps).ok()
}

/// Coordinate descent for `(1/n)|y - Phi w|^2 + lambda |w|_1`.
fn lasso(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = phi.nrows() as f64;
    let gram = phi.transpose() * phi / n;
    let corr = phi.transpose() * y / n;
    let m = gram.nrows();
    let mut w: DVector<f64> = DVector::zeros(m);
    let half = lambda / 2.0;
    for _ in 0..2000 {
        let mut max_change: f64 = 0.0;
        for j in 0..m {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let mut rho = corr[j];
            for l in 0..m {
                if l != j {
                    rho -= gram[(j, l)] * w[l];
                }
            }
            let new: f64 = soft_threshold(rho, half) / gjj;
            max_change = max_change.max((new - w[j]).abs());
            w[j] = new;
        }
        if max_change <= 1e-13 * (1.0 + w.amax()) {
            break;
        }
    }
    w
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn split_holdout(x: &Matrix, y: &[f64], fraction: f64, seed: u64) -> (Matrix, Vec<f64>, Matrix, Vec<f64>) {
    let n = y.len();
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return (x.clone(), y.to_vec(), x.clone(), y.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut val = rand::seq::index::sample(&mut rng, n, n_val).into_vec();
    val.sort_unstable();
    let mut is_val = vec![false; n];
    for &i in &val {
        is_val[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|i| !is_val[*i]).collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    (x.select_rows(&train), pick(&train), x.select_rows(&val), pick(&val))
}

fn variance(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64
}

fn nonzeros(theta: &[f64]) -> usize {
    theta.iter().filter(|v| **v != 0.0).count()
}

/// Minimizes the profiled objective over the free nonlinear coefficients,
/// starting from `start`, and returns the full coefficient vector.
fn optimize(p: &Problem<'_>, start: &[f64], lambda: f64, bh: Option<&BasinHoppingConfig>, budget: usize) -> Result<Vec<f64>, ParFamError> {
    let x0: Vec<f64> = p.nonlinear.iter().map(|&i| start[i]).collect();
    let best_nl = if x0.is_empty() {
        x0
    } else {
        let obj = Objective::new(x0.len(), |t: &[f64]| p.loss(t, lambda));
        match bh {
            Some(cfg) => basin_hopping(&obj, &x0, cfg)?.x,
            None => local_minimize(&obj, &x0, budget)?.x,
        }
    };
    p.solve(&best_nl, lambda)
        .map(|(theta, _)| theta)
        .ok_or(ParFamError::Optimizer(OptError::InvalidStart))
}

/// Two-stage fit: basin-hopping on the L1-penalized loss, then threshold
/// pruning with least-squares re-fits of the survivors.
pub fn parfam_fit(x: &Matrix, y: &[f64], s: &ParFamStructure, cfg: &ParFamFitConfig) -> Result<ParFamFit, ParFamError> {
    s.validate()?;
    cfg.validate()?;
    if y.is_empty() || x.n_rows() == 0 {
        return Err(ParFamError::EmptyData);
    }
    if x.n_rows() != y.len() {
        return Err(ParFamError::LengthMismatch { rows: x.n_rows(), targets: y.len() });
    }
    if x.n_cols() != s.arity {
        return Err(ParFamError::Arity { expected: s.arity, got: x.n_cols() });
    }
    let (xt, yt, xv, yv) = split_holdout(x, y, cfg.validation_fraction, cfg.seed);
    let total = s.n_params();
    let var = variance(&yt).max(f64::MIN_POSITIVE);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 0.1).unwrap();
    let theta0: Vec<f64> = (0..total).map(|_| init.sample(&mut rng)).collect();
    let all = vec![true; total];
    let p = Problem::new(s, &xt, &yt, &all);
    let bh = BasinHoppingConfig {
        temperature: cfg.basin.temperature * var,
        seed: cfg.seed,
        ..cfg.basin.clone()
    };
    let theta1 = match optimize(&p, &theta0, cfg.lambda, Some(&bh), 0) {
        Ok(t) => t,
        // Random starts can land on a pole; fall back to the all-zero start.
        Err(_) => optimize(&p, &vec![0.0; total], cfg.lambda, Some(&bh), 0)?,
    };
    let stage1_mse = mse(&parfam_eval(s, &theta1, &xt)?, &yt);
    let stage1_loss = stage1_mse + cfg.lambda * l1(&theta1);

    let val_mse = |theta: &[f64]| -> Result<f64, ParFamError> { Ok(mse(&parfam_eval(s, theta, &xv)?, &yv)) };
    // Undo the L1 shrinkage on the stage-1 support before pruning.
    let support: Vec<bool> = theta1.iter().map(|v| *v != 0.0).collect();
    let relaxed = optimize(&Problem::new(s, &xt, &yt, &support), &theta1, 0.0, None, cfg.finetune_budget)
        .ok()
        .filter(|t| parfam_eval(s, t, &xt).map_or(false, |p| mse(&p, &yt) <= stage1_mse));
    let theta1 = relaxed.unwrap_or(theta1);
    let reference = val_mse(&theta1)?;
    let limit = (1.0 + cfg.max_degradation) * reference + cfg.mse_slack * variance(&yv);

    let mut best = theta1;
    let mut stages = Vec::with_capacity(cfg.thresholds.len());
    for &t in &cfg.thresholds {
        // Re-fits can leave fresh sub-threshold coefficients, so each
        // threshold is applied until the support stops shrinking.
        loop {
            let active: Vec<bool> = best.iter().map(|v| v.abs() >= t).collect();
            let prev_nz = nonzeros(&best);
            if active.iter().filter(|a| **a).count() == prev_nz {
                stages.push(PruneStage { threshold: t, nonzeros: prev_nz, validation_mse: val_mse(&best)?, accepted: true });
                break;
            }
            let start: Vec<f64> = best.iter().zip(&active).map(|(v, a)| if *a { *v } else { 0.0 }).collect();
            let p = Problem::new(s, &xt, &yt, &active);
            let candidate = optimize(&p, &start, 0.0, None, cfg.finetune_budget).ok();
            let vm = match &candidate {
                Some(c) => val_mse(c)?,
                None => f64::INFINITY,
            };
            match candidate {
                Some(c) if vm <= limit && nonzeros(&c) < prev_nz => {
                    stages.push(PruneStage { threshold: t, nonzeros: nonzeros(&c), validation_mse: vm, accepted: true });
                    best = c;
                }
                _ => {
                    stages.push(PruneStage { threshold: t, nonzeros: prev_nz, validation_mse: vm, accepted: false });
                    break;
                }
            }
        }
    }
    let train_mse = mse(&parfam_eval(s, &best, &xt)?, &yt);
    Ok(ParFamFit {
        report: ParFamReport {
            stage1_loss,
            stage1_mse,
            reference_validation_mse: reference,
            stages,
            train_mse,
            nonzeros: nonzeros(&best),
        },
        theta: best,
    })
}

/// Fits every structure and returns the index and fit with the lowest
/// training MSE.
pub fn parfam_search(
    x: &Matrix,
    y: &[f64],
    structures: &[ParFamStructure],
    cfg: &ParFamFitConfig,
) -> Result<(usize, ParFamFit), ParFamError> {
    use rayon::prelude::*;
    let fits: Vec<Result<ParFamFit, ParFamError>> =
        structures.par_iter().map(|s| parfam_fit(x, y, s, cfg)).collect();
    let mut best: Option<(usize, ParFamFit)> = None;
    let mut first_err = None;
    for (i, f) in fits.into_iter().enumerate() {
        match f {
            Ok(f) => {
                if best.as_ref().is_none_or(|(_, b)| f.report.train_mse < b.report.train_mse) {
                    best = Some((i, f));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(ParFamError::InvalidStructure("no structures given".into())))
}

fn monomial_expr(exps: &[u32], vars: &[Expr]) -> Option<Expr> {
    let mut acc: Option<Expr> = None;
    for (e, v) in exps.iter().zip(vars) {
        let factor = match e {
            0 => continue,
            1 => v.clone(),
            n => Expr::unary(UnaryFn::PowInt(*n), v.clone()),
        };
        acc = Some(match acc {
            None => factor,
            Some(a) => Expr::mul(a, factor),
        });
    }
    acc
}

fn scaled_term(c: f64, mono: Option<Expr>) -> Expr {
    match mono {
        None => Expr::Const(c),
        Some(m) if c == 1.0 => m,
        Some(m) => Expr::mul(Expr::Const(c), m),
    }
}

/// Sum of terms with sign-aware chaining (`a - 2*x` rather than `a + -2*x`).
fn sum_expr(terms: Vec<(f64, Option<Expr>)>) -> Expr {
    let mut acc: Option<Expr> = None;
    for (c, m) in terms {
        acc = Some(match acc {
            None => scaled_term(c, m),
            Some(a) if c < 0.0 => Expr::sub(a, scaled_term(-c, m)),
            Some(a) => Expr::add(a, scaled_term(c, m)),
        });
    }
    acc.unwrap_or(Expr::Const(0.0))
}

fn poly_expr(monos: &[Vec<u32>], coef: &[f64], vars: &[Expr]) -> Expr {
    sum_expr(
        monos
            .iter()
            .zip(coef)
            .filter(|(_, c)| **c != 0.0)
            .map(|(m, c)| (*c, monomial_expr(m, vars)))
            .collect(),
    )
}

fn rational_expr(r: &Rational, theta: &[f64], vars: &[Expr]) -> Expr {
    let num = poly_expr(&r.num, &theta[r.num_range()], vars);
    let den_coef = &theta[r.den_range()];
    if den_coef.iter().all(|c| *c == 0.0) {
        return num;
    }
    let den = poly_expr(&r.den, den_coef, vars);
    Expr::binary(BinaryOp::Div, num, Expr::add(den, Expr::Const(1.0)))
}

/// Builds a symbolic expression over `x0..x{arity-1}`.
///
/// Coefficients with `|theta_i| <= zero_tol` are dropped. Outer numerator
/// terms sharing the same inner-function factor are grouped as
/// `P(x) * g(Q(x))`. The `exp` argument clamp is not part of the expression.
pub fn parfam_extract(s: &ParFamStructure, theta: &[f64], zero_tol: f64) -> Result<Expr, ParFamError> {
    let layout = s.layout();
    if theta.len() != layout.total {
        return Err(ParFamError::ThetaLength { expected: layout.total, got: theta.len() });
    }
    let theta: Vec<f64> = theta.iter().map(|v| if v.abs() <= zero_tol { 0.0 } else { *v }).collect();
    let xs: Vec<Expr> = (0..s.arity).map(Expr::Var).collect();
    let mut vars = xs.clone();
    for (g, q) in s.base.iter().zip(&layout.inner) {
        vars.push(Expr::unary(*g, rational_expr(q, &theta, &xs)));
    }

    // Group outer numerator terms by their inner-output exponents.
    let outer = &layout.outer;
    let coef = &theta[outer.num_range()];
    let mut groups: Vec<(Vec<u32>, Vec<(f64, Vec<u32>)>)> = Vec::new();
    for (m, c) in outer.num.iter().zip(coef) {
        if *c == 0.0 {
            continue;
        }
        let (xe, ze) = m.split_at(s.arity);
        match groups.iter_mut().find(|(z, _)| z.as_slice() == ze) {
            Some((_, terms)) => terms.push((*c, xe.to_vec())),
            None => groups.push((ze.to_vec(), vec![(*c, xe.to_vec())])),
        }
    }
    let mut terms: Vec<(f64, Option<Expr>)> = Vec::new();
    for (ze, xterms) in groups {
        let zfactor = monomial_expr(&ze, &vars[s.arity..]);
        if xterms.len() == 1 || zfactor.is_none() {
            for (c, xe) in xterms {
                let mono = match (monomial_expr(&xe, &xs), zfactor.clone()) {
                    (Some(a), Some(b)) => Some(Expr::mul(a, b)),
                    (a, b) => a.or(b),
                };
                terms.push((c, mono));
            }
        } else {
            let p = sum_expr(xterms.into_iter().map(|(c, xe)| (c, monomial_expr(&xe, &xs))).collect());
            terms.push((1.0, Some(Expr::mul(p, zfactor.unwrap()))));
        }
    }
    let num = sum_expr(terms);
    let den_coef = &theta[outer.den_range()];
    if den_coef.iter().all(|c| *c == 0.0) {
        return Ok(num);
    }
    let den = poly_expr(&outer.den, den_coef, &vars);
    Ok(Expr::binary(BinaryOp::Div, num, Expr::add(den, Expr::Const(1.0))))
}

/// A fitted structure, serializable as a model artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParFamModel {
    pub structure: ParFamStructure,
    pub theta: Vec<f64>,
}

impl ParFamModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ParFamError> {
        parfam_eval(&self.structure, &self.theta, x)
    }

    pub fn to_expr(&self) -> Expr {
        parfam_extract(&self.structure, &self.theta, 0.0).expect("theta length checked at construction")
    }
}
