//! Derivative-free local optimization (adaptive Nelder-Mead) and
//! basin-hopping global optimization.
//!
//! Objectives map invalid points (NaN, infinities) to [`INVALID`], a large
//! finite sentinel, so the simplex can retreat from them instead of
//! poisoning its ordering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

/// Value substituted for non-finite objective values.
pub const INVALID: f64 = 1e300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("invalid start point: objective is not finite at x0")]
    InvalidStart,
    #[error("empty data")]
    EmptyData,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Box constraints `lower[i] <= x[i] <= upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptError> {
        if lower.len() != upper.len() {
            return Err(OptError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(OptError::InvalidConfig(
                "lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, l), u)| *v >= *l && *v <= *u)
    }
}

/// A scalar objective over `R^dim`, optionally box-constrained.
pub struct Objective<'a> {
    dim: usize,
    func: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    bounds: Option<Bounds>,
}

impl<'a> Objective<'a> {
    pub fn new(dim: usize, func: impl Fn(&[f64]) -> f64 + Sync + 'a) -> Self {
        Self {
            dim,
            func: Box::new(func),
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self, OptError> {
        if bounds.dim() != self.dim {
            return Err(OptError::DimensionMismatch {
                expected: self.dim,
                got: bounds.dim(),
            });
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    /// Evaluates at `x`, mapping non-finite values to [`INVALID`].
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = (self.func)(x);
        if v.is_finite() {
            v.min(INVALID)
        } else {
            INVALID
        }
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(b) = &self.bounds {
            b.project(x);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
}

/// Nelder-Mead with dimension-adaptive coefficients, restarted from the best
/// vertex until a restart no longer improves or `budget` evaluations are used.
///
/// Trial points are projected onto the bounds, so every evaluated point is
/// feasible. The returned value never exceeds `f(x0)`.
pub fn local_minimize(
    obj: &Objective<'_>,
    x0: &[f64],
    budget: usize,
) -> Result<LocalResult, OptError> {
    if x0.len() != obj.dim() {
        return Err(OptError::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if budget == 0 {
        return Err(OptError::InvalidConfig("budget must be >= 1".into()));
    }
    let mut x = x0.to_vec();
    obj.project(&mut x);
    let raw = (obj.func)(&x);
    if !raw.is_finite() {
        return Err(OptError::InvalidStart);
    }
    let mut f = obj.eval(&x);
    let mut evals = 1;
    if obj.dim() == 0 {
        return Ok(LocalResult {
            x,
            f,
            evaluations: evals,
        });
    }
    let mut scale = 1.0;
    while evals < budget {
        let (nx, nf, used) = nelder_mead(obj, &x, f, budget - evals, scale);
        evals += used;
        let improved = nf < f;
        let gain = f - nf;
        if improved {
            x = nx;
            f = nf;
        }
        if !improved || gain <= 1e-15 * f.abs().max(1e-300) {
            // A second fruitless restart with a smaller simplex ends the run.
            if scale < 1.0 {
                break;
            }
            scale = 0.1;
        } else {
            scale = 1.0;
        }
    }
    Ok(LocalResult {
        x,
        f,
        evaluations: evals,
    })
}

/// One Nelder-Mead run from `x0`; returns (best x, best f, evaluations used).
fn nelder_mead(
    obj: &Objective<'_>,
    x0: &[f64],
    f0: f64,
    budget: usize,
    scale: f64,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let nf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;
    let (beta, gamma, delta) = if n == 1 {
        (2.0, 0.5, 0.5)
    } else {
        (beta, gamma, delta)
    };

    let mut evals = 0;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        if evals >= budget {
            break;
        }
        let mut v = x0.to_vec();
        let h = if x0[i] != 0.0 {
            0.05 * x0[i].abs()
        } else {
            0.00025
        } * scale;
        v[i] += h;
        obj.project(&mut v);
        if v[i] == x0[i] {
            v[i] -= h;
            obj.project(&mut v);
        }
        let fv = obj.eval(&v);
        evals += 1;
        simplex.push((v, fv));
    }
    if simplex.len() < n + 1 {
        let best = simplex
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        return (best.0, best.1, evals);
    }

    let eval = |p: Vec<f64>, evals: &mut usize| -> (Vec<f64>, f64) {
        let mut p = p;
        obj.project(&mut p);
        *evals += 1;
        let v = obj.eval(&p);
        (p, v)
    };

    let mut centroid = vec![0.0; n];
    while evals < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best_f, worst_f) = (simplex[0].1, simplex[n].1);
        let f_spread = worst_f - best_f;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let x_scale = simplex[0].0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if f_spread <= 1e-14 * best_f.abs().max(1e-280) + 1e-300 || x_spread <= 1e-13 * x_scale
        {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let worst = simplex[n].0.clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let (xr, fr) = eval(along(alpha), &mut evals);
        if fr < simplex[0].1 {
            let (xe, fe) = eval(along(alpha * beta), &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst_f {
            eval(along(alpha * gamma), &mut evals)
        } else {
            eval(along(-gamma), &mut evals)
        };
        if fc < fr.min(worst_f) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].0.clone();
        for k in 1..=n {
            if evals >= budget {
                break;
            }
            let p: Vec<f64> = best
                .iter()
                .zip(&simplex[k].0)
                .map(|(b, v)| b + delta * (v - b))
                .collect();
            simplex[k] = eval(p, &mut evals);
        }
    }
    let best = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    (best.0, best.1, evals)
}

/// Basin-hopping settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasinHoppingConfig {
    /// Number of perturb/minimize/accept hops after the initial minimization.
    pub iterations: usize,
    /// Standard deviation of the Gaussian perturbation.
    pub step_size: f64,
    /// Metropolis temperature in loss units; 0 accepts only improvements.
    pub temperature: f64,
    /// Evaluation budget of each local minimization.
    pub local_budget: usize,
    pub seed: u64,
    /// When set, every `n` hops the step size is rescaled towards a 50%
    /// acceptance rate.
    pub adapt_interval: Option<usize>,
    /// Per-coordinate multipliers for the step size; empty means all 1.
    pub step_scales: Vec<f64>,
}

impl Default for BasinHoppingConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            step_size: 0.5,
            temperature: 1.0,
            local_budget: 2000,
            seed: 0,
            adapt_interval: None,
            step_scales: Vec::new(),
        }
    }
}

impl BasinHoppingConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        if self.iterations < 1 {
            return Err(OptError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(OptError::InvalidConfig("step size must be > 0".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(OptError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.local_budget < 1 {
            return Err(OptError::InvalidConfig("local budget must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinHoppingResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Best objective value after the initial minimization and after each hop.
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub evaluations: usize,
}

/// Basin-hopping: perturb the current point, minimize locally, accept by the
/// Metropolis rule. Returns the best local minimum seen.
pub fn basin_hopping(
    obj: &Objective<'_>,
    x0: &[f64],
    cfg: &BasinHoppingConfig,
) -> Result<BasinHoppingResult, OptError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = local_minimize(obj, x0, cfg.local_budget)?;
    let mut evaluations = start.evaluations;
    let (mut cur_x, mut cur_f) = (start.x, start.f);
    let (mut best_x, mut best_f) = (cur_x.clone(), cur_f);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(best_f);
    let mut step = cfg.step_size;
    let mut accepted = 0;
    let mut accepted_window = 0;

    for hop in 1..=cfg.iterations {
        let mut trial: Vec<f64> = cur_x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + step * cfg.step_scales.get(i).copied().unwrap_or(1.0) * z
            })
            .collect();
        obj.project(&mut trial);
        // An invalid landing point is a rejected hop, not an error.
        let local = match local_minimize(obj, &trial, cfg.local_budget) {
            Ok(r) => r,
            Err(_) => {
                evaluations += 1;
                trace.push(best_f);
                continue;
            }
        };
        evaluations += local.evaluations;
        let accept = if local.f < cur_f {
            true
        } else if cfg.temperature > 0.0 {
            let p = (-(local.f - cur_f) / cfg.temperature).exp();
            rng.random::<f64>() < p
        } else {
            false
        };
        if accept {
            accepted += 1;
            accepted_window += 1;
            cur_x = local.x;
            cur_f = local.f;
            if cur_f < best_f {
                best_f = cur_f;
                best_x = cur_x.clone();
            }
        }
        trace.push(best_f);
        if let Some(interval) = cfg.adapt_interval.filter(|n| *n > 0) {
            if hop % interval == 0 {
                let rate = accepted_window as f64 / interval as f64;
                step = if rate > 0.5 { step / 0.9 } else { step * 0.9 };
                accepted_window = 0;
            }
        }
    }
    Ok(BasinHoppingResult {
        x: best_x,
        f: best_f,
        trace,
        accepted,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub theta: Vec<f64>,
    pub mse: f64,
}

/// Mean squared error of `pred` against `y`; non-finite predictions give
/// `f64::INFINITY`.
pub fn mse(pred: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(y) {
        let d = p - t;
        acc += d * d;
    }
    let v = acc / y.len() as f64;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Least-squares fit of a parametric model by basin-hopping on the MSE.
pub fn fit_least_squares<F>(
    model: F,
    theta0: &[f64],
    x: &Matrix,
    y: &[f64],
    bounds: Option<Bounds>,
    cfg: &BasinHoppingConfig,
) -> Result<LeastSquaresFit, OptError>
where
    F: Fn(&[f64], &Matrix) -> Vec<f64> + Sync,
{
    if y.is_empty() || x.n_rows() == 0 {
        return Err(OptError::EmptyData);
    }
    if x.n_rows() != y.len() {
        return Err(OptError::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    let mut obj = Objective::new(theta0.len(), |theta: &[f64]| mse(&model(theta, x), y));
    if let Some(b) = bounds {
        obj = obj.with_bounds(b)?;
    }
    let res = basin_hopping(&obj, theta0, cfg)?;
    Ok(LeastSquaresFit {
        theta: res.x,
        mse: res.f,
    })
}
