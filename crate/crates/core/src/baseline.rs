//! Static Stribeck friction baselines.
//!
//! `tau_f(v) = sgn(v) * (F_c + (F_s - F_c) * exp(-|v / v_s|^delta_s)) + F_v * v`
//!
//! The asymmetric variant carries one parameter set per direction of motion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{sign, BinaryOp, Expr, UnaryFn};
use crate::matrix::Matrix;
use crate::numopt::{self, BasinHoppingConfig, Bounds, OptError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid Stribeck parameters: {0}")]
    InvalidParams(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("asymmetric fit needs samples with {0} velocity")]
    MissingBranch(&'static str),
    #[error("qdot and tau_f lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Optimizer(#[from] OptError),
}

/// Parameters of the static Stribeck model. Field names follow the usual
/// symbols when serialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StribeckParams {
    /// Coulomb friction level (Nm).
    #[serde(rename = "F_c")]
    pub f_c: f64,
    /// Static (breakaway) friction level (Nm).
    #[serde(rename = "F_s")]
    pub f_s: f64,
    /// Viscous coefficient (Nm s/rad).
    #[serde(rename = "F_v")]
    pub f_v: f64,
    /// Stribeck velocity (rad/s), > 0.
    pub v_s: f64,
    /// Stribeck exponent, > 0.
    pub delta_s: f64,
}

impl StribeckParams {
    pub fn new(f_c: f64, f_s: f64, f_v: f64, v_s: f64, delta_s: f64) -> Result<Self, BaselineError> {
        let p = Self {
            f_c,
            f_s,
            f_v,
            v_s,
            delta_s,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let all = [self.f_c, self.f_s, self.f_v, self.v_s, self.delta_s];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::InvalidParams("non-finite value".into()));
        }
        if self.v_s <= 0.0 {
            return Err(BaselineError::InvalidParams("v_s must be > 0".into()));
        }
        if self.delta_s <= 0.0 {
            return Err(BaselineError::InvalidParams("delta_s must be > 0".into()));
        }
        Ok(())
    }

    /// Friction torque at velocity `qdot`; exactly 0 at `qdot == 0`.
    #[inline]
    pub fn eval(&self, qdot: f64) -> f64 {
        let stribeck = (-(qdot / self.v_s).abs().powf(self.delta_s)).exp();
        sign(qdot) * (self.f_c + (self.f_s - self.f_c) * stribeck) + self.f_v * qdot
    }

    /// The closed form as an expression of input `x{var}` (the velocity).
    pub fn to_expr(&self, var: usize) -> Expr {
        let v = || Expr::Var(var);
        let decay = Expr::unary(
            UnaryFn::Neg,
            Expr::binary(
                BinaryOp::Pow,
                Expr::unary(
                    UnaryFn::Abs,
                    Expr::binary(BinaryOp::Div, v(), Expr::Const(self.v_s)),
                ),
                Expr::Const(self.delta_s),
            ),
        );
        let level = Expr::add(
            Expr::Const(self.f_c),
            Expr::mul(
                Expr::sub(Expr::Const(self.f_s), Expr::Const(self.f_c)),
                Expr::unary(UnaryFn::Exp, decay),
            ),
        );
        Expr::add(
            Expr::mul(Expr::unary(UnaryFn::Sign, v()), level),
            Expr::mul(Expr::Const(self.f_v), v()),
        )
    }

    fn to_search(self) -> [f64; 5] {
        [self.f_c, self.f_s, self.f_v, self.v_s.ln(), self.delta_s.ln()]
    }

    fn from_search(t: &[f64]) -> Self {
        Self {
            f_c: t[0],
            f_s: t[1],
            f_v: t[2],
            v_s: t[3].exp(),
            delta_s: t[4].exp(),
        }
    }
}

/// Evaluates the symmetric model.
pub fn stribeck_eval(p: &StribeckParams, qdot: f64) -> f64 {
    p.eval(qdot)
}

/// One parameter set per direction: `positive` for `qdot > 0`, `negative`
/// for `qdot <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricStribeck {
    pub positive: StribeckParams,
    pub negative: StribeckParams,
}

impl AsymmetricStribeck {
    pub fn new(positive: StribeckParams, negative: StribeckParams) -> Result<Self, BaselineError> {
        positive.validate()?;
        negative.validate()?;
        Ok(Self { positive, negative })
    }

    pub fn symmetric(p: StribeckParams) -> Self {
        Self {
            positive: p,
            negative: p,
        }
    }

    #[inline]
    pub fn eval(&self, qdot: f64) -> f64 {
        if qdot > 0.0 {
            self.positive.eval(qdot)
        } else {
            self.negative.eval(qdot)
        }
    }
}

pub fn asymmetric_eval(m: &AsymmetricStribeck, qdot: f64) -> f64 {
    m.eval(qdot)
}

/// Settings shared by the symmetric and asymmetric fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineFitConfig {
    /// Independent basin-hopping runs, each from a different `v_s` start.
    pub starts: usize,
    pub basin: BasinHoppingConfig,
    pub seed: u64,
}

impl Default for BaselineFitConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            basin: BasinHoppingConfig {
                iterations: 8,
                step_size: 0.5,
                temperature: 1.0,
                local_budget: 1500,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

pub const MIN_SAMPLES: usize = 10;

/// Search-space bounds over `(F_c, F_s, F_v, ln v_s, ln delta_s)`.
fn search_bounds() -> Bounds {
    Bounds::new(
        vec![0.0, 0.0, 0.0, 1e-3_f64.ln(), 1e-2_f64.ln()],
        vec![1e4, 1e4, 1e3, 1e3_f64.ln(), 1e2_f64.ln()],
    )
    .expect("static bounds are ordered")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricFit {
    pub params: StribeckParams,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricFit {
    pub model: AsymmetricStribeck,
    pub mse: f64,
}

fn check_lengths(qdot: &[f64], tau_f: &[f64]) -> Result<(), BaselineError> {
    if qdot.len() != tau_f.len() {
        return Err(BaselineError::LengthMismatch(qdot.len(), tau_f.len()));
    }
    if qdot.len() < MIN_SAMPLES {
        return Err(BaselineError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: qdot.len(),
        });
    }
    Ok(())
}

/// Least-squares `tau ~ a sgn(v) + b v`, used to seed the level parameters.
fn coulomb_viscous_guess(qdot: &[f64], tau_f: &[f64]) -> (f64, f64) {
    let (mut ss, mut sv, mut vv, mut st, mut vt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&v, &t) in qdot.iter().zip(tau_f) {
        let s = sign(v);
        ss += s * s;
        sv += s * v;
        vv += v * v;
        st += s * t;
        vt += v * t;
    }
    let det = ss * vv - sv * sv;
    if det.abs() < 1e-12 * (ss * vv).max(1e-300) {
        let a = if ss > 0.0 { st / ss } else { 0.0 };
        return (a, 0.0);
    }
    ((st * vv - vt * sv) / det, (ss * vt - sv * st) / det)
}

fn fit_from_starts(
    qdot: &[f64],
    tau_f: &[f64],
    extra_start: Option<StribeckParams>,
    cfg: &BaselineFitConfig,
) -> Result<SymmetricFit, BaselineError> {
    let x = Matrix::column_vector(qdot.to_vec());
    let bounds = search_bounds();
    let (a, b) = coulomb_viscous_guess(qdot, tau_f);
    let level = a.clamp(0.0, 1e4);
    let viscous = b.clamp(0.0, 1e3);
    let vmax = qdot.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-3);

    // Stribeck velocities spread log-uniformly over [1e-3, 1e3], nudged by seed.
    let starts = cfg.starts.max(1);
    let mut inits: Vec<[f64; 5]> = (0..starts)
        .map(|k| {
            let frac = (k as f64 + 0.5) / starts as f64;
            let jitter = ((cfg.seed.wrapping_mul(2654435761) % 1000) as f64 / 1000.0 - 0.5) / starts as f64;
            let ln_vs = 1e-3_f64.ln() + (frac + jitter).clamp(0.0, 1.0) * (1e6_f64).ln();
            let delta: f64 = if k % 2 == 0 { 2.0 } else { 1.0 };
            [level, level, viscous, ln_vs, delta.ln()]
        })
        .collect();
    // One start at the data's velocity scale.
    inits.push([level, level, viscous, (0.1 * vmax).ln(), 2f64.ln()]);
    if let Some(p) = extra_start {
        let mut t = p.to_search();
        bounds.project(&mut t);
        inits.push(t);
    }

    let scale_level = level.abs().max(1.0);
    let scale_visc = viscous.abs().max(1.0);
    let model = |t: &[f64], x: &Matrix| -> Vec<f64> {
        let p = StribeckParams::from_search(t);
        x.column(0).iter().map(|&v| p.eval(v)).collect()
    };

    let fits: Vec<_> = inits
        .par_iter()
        .enumerate()
        .map(|(k, init)| {
            let basin = BasinHoppingConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                step_scales: if cfg.basin.step_scales.is_empty() {
                    vec![scale_level, scale_level, scale_visc, 2.0, 1.0]
                } else {
                    cfg.basin.step_scales.clone()
                },
                ..cfg.basin.clone()
            };
            numopt::fit_least_squares(model, init, &x, tau_f, Some(bounds.clone()), &basin)
        })
        .collect();

    let mut best: Option<SymmetricFit> = None;
    for fit in fits {
        let fit = fit?;
        let params = StribeckParams::from_search(&fit.theta);
        if best.as_ref().map_or(true, |b| fit.mse < b.mse) {
            best = Some(SymmetricFit {
                params,
                mse: fit.mse,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

/// Fits the symmetric model by multi-start basin-hopping on the MSE.
pub fn fit_symmetric(
    qdot: &[f64],
    tau_f: &[f64],
    cfg: &BaselineFitConfig,
) -> Result<SymmetricFit, BaselineError> {
    check_lengths(qdot, tau_f)?;
    fit_from_starts(qdot, tau_f, None, cfg)
}

/// Fits one parameter set per direction of motion.
///
/// Each branch is fitted on its own subset; the symmetric fit over all data
/// seeds both branches, so the result is never worse than the symmetric one.
pub fn fit_asymmetric(
    qdot: &[f64],
    tau_f: &[f64],
    cfg: &BaselineFitConfig,
) -> Result<AsymmetricFit, BaselineError> {
    check_lengths(qdot, tau_f)?;
    let (mut pos_v, mut pos_t, mut neg_v, mut neg_t) = (vec![], vec![], vec![], vec![]);
    for (&v, &t) in qdot.iter().zip(tau_f) {
        if v > 0.0 {
            pos_v.push(v);
            pos_t.push(t);
        } else {
            neg_v.push(v);
            neg_t.push(t);
        }
    }
    if pos_v.is_empty() {
        return Err(BaselineError::MissingBranch("positive"));
    }
    if !neg_v.iter().any(|v| *v < 0.0) {
        return Err(BaselineError::MissingBranch("negative"));
    }
    let sym = fit_from_starts(qdot, tau_f, None, cfg)?;
    let pos = fit_from_starts(&pos_v, &pos_t, Some(sym.params), cfg)?;
    let neg = fit_from_starts(&neg_v, &neg_t, Some(sym.params), cfg)?;
    let n = qdot.len() as f64;
    let mse = (pos.mse * pos_v.len() as f64 + neg.mse * neg_v.len() as f64) / n;
    Ok(AsymmetricFit {
        model: AsymmetricStribeck {
            positive: pos.params,
            negative: neg.params,
        },
        mse,
    })
}
