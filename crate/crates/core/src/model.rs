//! Fitted friction models, the fit dispatcher, residual adaptation and
//! external-torque estimation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{fit_asymmetric, fit_symmetric, AsymmetricStribeck, BaselineError, BaselineFitConfig, StribeckParams};
use crate::data::{feature_matrix, friction_target, segment_constant_velocity, DataError, Feature, JointDataset, JointSample};
use crate::expr::{BinaryOp, Expr, FunctionSet};
use crate::gp::{evolve, GpConfig, GpError, ParetoArchive};
use crate::parfam::{parfam_fit, ParFamError, ParFamFitConfig, ParFamModel, ParFamStructure};
use crate::Matrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    ParFam(#[from] ParFamError),
    #[error("the {0} fit needs `qdot` among the features")]
    MissingQdot(FitMethod),
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("`{0}` may not be used for residual adaptation")]
    ResidualFeature(Feature),
    #[error("adaptation data must not contain external torque")]
    ExternalTorque,
    #[error("no regression points could be formed from the data")]
    NoPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Sym,
    Asym,
    Gp,
    Parfam,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Sym => "sym",
            FitMethod::Asym => "asym",
            FitMethod::Gp => "gp",
            FitMethod::Parfam => "parfam",
        })
    }
}

impl FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sym" => Ok(FitMethod::Sym),
            "asym" => Ok(FitMethod::Asym),
            "gp" => Ok(FitMethod::Gp),
            "parfam" => Ok(FitMethod::Parfam),
            other => Err(format!("unknown method `{other}` (expected sym, asym, gp or parfam)")),
        }
    }
}

/// How samples are grouped into regression points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointSource {
    /// Movement averages when movements are labelled, segments otherwise.
    /// Residual fits use every sample, since their features vary within a
    /// movement.
    Auto,
    Samples,
    Movements,
    Segments { tolerance: f64, min_duration: f64 },
}

const DEFAULT_SEGMENTS: PointSource = PointSource::Segments { tolerance: 0.01, min_duration: 0.5 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub points: PointSource,
    pub baseline: BaselineFitConfig,
    pub gp: GpConfig,
    pub function_set: FunctionSet,
    /// An archive entry is chosen as the simplest one whose loss is within
    /// this relative margin of the lowest loss.
    pub selection_tolerance: f64,
    pub parfam: ParFamFitConfig,
    /// Defaults to the friction family for fits and to a quadratic
    /// polynomial for residuals.
    pub parfam_structure: Option<ParFamStructure>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            points: PointSource::Auto,
            baseline: BaselineFitConfig::default(),
            gp: GpConfig::default(),
            function_set: FunctionSet::default(),
            selection_tolerance: 0.0,
            parfam: ParFamFitConfig::default(),
            parfam_structure: None,
        }
    }
}

impl FitConfig {
    /// Sets the seed of every stochastic stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.baseline.seed = seed;
        self.gp.seed = seed;
        self.parfam.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrictionModel {
    Symmetric { params: StribeckParams },
    Asymmetric { model: AsymmetricStribeck },
    /// `formula` reads feature `i` as `x{i}`.
    Symbolic { formula: Expr, features: Vec<Feature> },
    Parfam { model: ParFamModel, features: Vec<Feature> },
    /// `base + residual`, where the residual reads `residual_features`.
    Combined { base: Box<FrictionModel>, residual: Expr, residual_features: Vec<Feature> },
}

fn remap_vars(e: &Expr, map: &[usize]) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(*c),
        Expr::Var(i) => Expr::Var(map[*i]),
        Expr::Unary(f, a) => Expr::unary(*f, remap_vars(a, map)),
        Expr::Binary(op, a, b) => Expr::binary(*op, remap_vars(a, map), remap_vars(b, map)),
    }
}

fn check_arity(e: &Expr, features: &[Feature]) -> Result<(), ModelError> {
    match e.max_var() {
        Some(v) if v >= features.len() => Err(ModelError::FeatureMismatch(format!(
            "formula reads x{v} but the model declares {} feature(s)",
            features.len()
        ))),
        _ => Ok(()),
    }
}

impl FrictionModel {
    pub fn method_name(&self) -> &'static str {
        match self {
            FrictionModel::Symmetric { .. } => "sym",
            FrictionModel::Asymmetric { .. } => "asym",
            FrictionModel::Symbolic { .. } => "gp",
            FrictionModel::Parfam { .. } => "parfam",
            FrictionModel::Combined { .. } => "combined",
        }
    }

    /// Checks that formulas only read declared features.
    pub fn check(&self) -> Result<(), ModelError> {
        match self {
            FrictionModel::Symmetric { params } => Ok(params.validate()?),
            FrictionModel::Asymmetric { model } => {
                model.positive.validate()?;
                Ok(model.negative.validate()?)
            }
            FrictionModel::Symbolic { formula, features } => check_arity(formula, features),
            FrictionModel::Parfam { model, features } => {
                model.structure.validate()?;
                if model.structure.arity != features.len() {
                    return Err(ModelError::FeatureMismatch(format!(
                        "structure expects {} input(s) but the model declares {} feature(s)",
                        model.structure.arity,
                        features.len()
                    )));
                }
                if model.theta.len() != model.structure.n_params() {
                    return Err(ParFamError::ThetaLength { expected: model.structure.n_params(), got: model.theta.len() }.into());
                }
                Ok(())
            }
            FrictionModel::Combined { base, residual, residual_features } => {
                base.check()?;
                check_arity(residual, residual_features)
            }
        }
    }

    pub fn predict_one(&self, qdot: f64, tau_g: f64) -> f64 {
        let s = JointSample { t: 0.0, q: 0.0, qdot, tau_m: 0.0, tau_g, tau_ext: None, movement: None };
        self.predict(&[s])[0]
    }

    /// Friction estimate per sample. The model must pass [`Self::check`].
    pub fn predict(&self, samples: &[JointSample]) -> Vec<f64> {
        match self {
            FrictionModel::Symmetric { params } => samples.iter().map(|s| params.eval(s.qdot)).collect(),
            FrictionModel::Asymmetric { model } => samples.iter().map(|s| model.eval(s.qdot)).collect(),
            FrictionModel::Symbolic { formula, features } => formula.eval_unchecked(&feature_matrix(samples, features)),
            FrictionModel::Parfam { model, features } => model
                .predict(&feature_matrix(samples, features))
                .unwrap_or_else(|_| vec![f64::NAN; samples.len()]),
            FrictionModel::Combined { base, residual, residual_features } => {
                let r = residual.eval_unchecked(&feature_matrix(samples, residual_features));
                base.predict(samples).into_iter().zip(r).map(|(b, r)| b + r).collect()
            }
        }
    }

    /// Closed-form pieces: one expression for single-branch models, the
    /// `qdot > 0` and `qdot <= 0` branches for the asymmetric model, with the
    /// variables that the expressions read.
    pub fn expressions(&self) -> (Vec<Expr>, Vec<Feature>) {
        match self {
            FrictionModel::Symmetric { params } => (vec![params.to_expr(0)], vec![Feature::Qdot]),
            FrictionModel::Asymmetric { model } => {
                (vec![model.positive.to_expr(0), model.negative.to_expr(0)], vec![Feature::Qdot])
            }
            FrictionModel::Symbolic { formula, features } => (vec![formula.clone()], features.clone()),
            FrictionModel::Parfam { model, features } => (vec![model.to_expr()], features.clone()),
            FrictionModel::Combined { base, residual, residual_features } => {
                let (exprs, mut features) = base.expressions();
                let map: Vec<usize> = residual_features
                    .iter()
                    .map(|f| match features.iter().position(|g| g == f) {
                        Some(i) => i,
                        None => {
                            features.push(*f);
                            features.len() - 1
                        }
                    })
                    .collect();
                let r = remap_vars(residual, &map);
                let exprs = exprs.into_iter().map(|e| Expr::binary(BinaryOp::Add, e, r.clone())).collect();
                (exprs, features)
            }
        }
    }

    /// Parseable formula text; the asymmetric model renders as
    /// `A if x0 > 0 else B`.
    pub fn formula(&self) -> String {
        let (exprs, _) = self.expressions();
        match exprs.as_slice() {
            [e] => e.to_string(),
            [p, n] => format!("{p} if x0 > 0 else {n}"),
            _ => unreachable!("models have one or two branches"),
        }
    }

    /// Sum of the branch complexities.
    pub fn complexity(&self) -> usize {
        self.expressions().0.iter().map(Expr::complexity).sum()
    }

    /// Complexity of the residual alone for combined models.
    pub fn residual_complexity(&self) -> Option<usize> {
        match self {
            FrictionModel::Combined { residual, .. } => Some(residual.complexity()),
            _ => None,
        }
    }
}

/// Simplest archive entry whose loss is within `rel_tol` of the lowest.
pub fn select_formula(archive: &ParetoArchive, rel_tol: f64) -> Option<Expr> {
    let best = archive.best()?.loss;
    archive.iter().find(|g| g.loss <= best * (1.0 + rel_tol)).map(|g| g.expr.clone())
}

fn sample_groups(ds: &JointDataset, source: PointSource) -> Result<Vec<Vec<usize>>, ModelError> {
    let groups = match source {
        PointSource::Samples => (0..ds.len()).map(|i| vec![i]).collect(),
        PointSource::Movements => ds.movements()?.into_iter().map(|(_, idx)| idx).collect(),
        PointSource::Segments { tolerance, min_duration } => segment_constant_velocity(ds, tolerance, min_duration)?
            .into_iter()
            .map(|s| (s.start..s.end).collect())
            .collect(),
        PointSource::Auto if ds.has_movements() => return sample_groups(ds, PointSource::Movements),
        PointSource::Auto => return sample_groups(ds, DEFAULT_SEGMENTS),
    };
    Ok(groups)
}

/// Regression inputs at each group's mean state and the group mean of
/// `target`. Also returns the mean velocities.
fn grouped_points(
    ds: &JointDataset,
    source: PointSource,
    features: &[Feature],
    target: &[f64],
) -> Result<(Matrix, Vec<f64>, Vec<f64>), ModelError> {
    let groups = sample_groups(ds, source)?;
    if groups.is_empty() {
        return Err(ModelError::NoPoints);
    }
    let mean = |idx: &[usize], f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64;
    let mut rows = Vec::with_capacity(groups.len());
    let mut y = Vec::with_capacity(groups.len());
    let mut qdot = Vec::with_capacity(groups.len());
    for idx in &groups {
        let v = mean(idx, &|i| ds.samples[i].qdot);
        let g = mean(idx, &|i| ds.samples[i].tau_g);
        rows.push(features.iter().map(|f| f.value(v, g)).collect::<Vec<_>>());
        y.push(mean(idx, &|i| target[i]));
        qdot.push(v);
    }
    let x = if features.is_empty() { Matrix::zeros(rows.len(), 0) } else { Matrix::from_rows(&rows) };
    Ok((x, y, qdot))
}

/// The regression points a fit with this configuration would use.
pub fn friction_points(ds: &JointDataset, features: &[Feature], source: PointSource) -> Result<(Matrix, Vec<f64>), ModelError> {
    let (x, y, _) = grouped_points(ds, source, features, &ds.tau_f())?;
    Ok((x, y))
}

fn fit_points(x: &Matrix, y: &[f64], qdot: &[f64], features: &[Feature], method: FitMethod, cfg: &FitConfig, residual: bool) -> Result<FrictionModel, ModelError> {
    Ok(match method {
        FitMethod::Sym => {
            if !features.contains(&Feature::Qdot) {
                return Err(ModelError::MissingQdot(method));
            }
            FrictionModel::Symmetric { params: fit_symmetric(qdot, y, &cfg.baseline)?.params }
        }
        FitMethod::Asym => {
            if !features.contains(&Feature::Qdot) {
                return Err(ModelError::MissingQdot(method));
            }
            FrictionModel::Asymmetric { model: fit_asymmetric(qdot, y, &cfg.baseline)?.model }
        }
        FitMethod::Gp => {
            let archive = evolve(x, y, &cfg.function_set, &cfg.gp)?;
            let formula = select_formula(&archive, cfg.selection_tolerance).ok_or(ModelError::NoPoints)?;
            FrictionModel::Symbolic { formula, features: features.to_vec() }
        }
        FitMethod::Parfam => {
            let structure = match &cfg.parfam_structure {
                Some(s) => s.clone(),
                None if residual => ParFamStructure::polynomial(features.len(), 2),
                None => ParFamStructure::friction_default(features.len()),
            };
            if structure.arity != features.len() {
                return Err(ModelError::FeatureMismatch(format!(
                    "structure expects {} input(s) but {} feature(s) were given",
                    structure.arity,
                    features.len()
                )));
            }
            let fit = parfam_fit(x, y, &structure, &cfg.parfam)?;
            FrictionModel::Parfam { model: ParFamModel { structure, theta: fit.theta }, features: features.to_vec() }
        }
    })
}

/// Fits a friction model to `tau_f = tau_g - tau_m`.
pub fn fit_model(ds: &JointDataset, features: &[Feature], method: FitMethod, cfg: &FitConfig) -> Result<FrictionModel, ModelError> {
    if features.is_empty() {
        return Err(DataError::NoFeatures.into());
    }
    let (x, y, qdot) = grouped_points(ds, cfg.points, features, &ds.tau_f())?;
    fit_points(&x, &y, &qdot, features, method, cfg, false)
}

/// Learns an additive correction to `base` from data without external
/// torque. Residual formulas may not read `qdot`, so the base model's
/// velocity dependence is kept.
pub fn adapt_residual(
    base: &FrictionModel,
    ds: &JointDataset,
    features: &[Feature],
    method: FitMethod,
    cfg: &FitConfig,
) -> Result<FrictionModel, ModelError> {
    base.check()?;
    if features.is_empty() {
        return Err(DataError::NoFeatures.into());
    }
    if let Some(f) = features.iter().find(|f| **f == Feature::Qdot) {
        return Err(ModelError::ResidualFeature(*f));
    }
    if !matches!(method, FitMethod::Gp | FitMethod::Parfam) {
        return Err(ModelError::FeatureMismatch(format!("residual engine must be gp or parfam, got {method}")));
    }
    if ds.samples.iter().any(|s| s.tau_ext.is_some_and(|e| e != 0.0)) {
        return Err(ModelError::ExternalTorque);
    }
    let pred = base.predict(&ds.samples);
    let r: Vec<f64> = ds.samples.iter().zip(&pred).map(|(s, p)| friction_target(s) - p).collect();
    let source = match cfg.points {
        PointSource::Auto => PointSource::Samples,
        other => other,
    };
    let (x, y, qdot) = grouped_points(ds, source, features, &r)?;
    let residual = match fit_points(&x, &y, &qdot, features, method, cfg, true)? {
        FrictionModel::Symbolic { formula, .. } => formula,
        FrictionModel::Parfam { model, .. } => model.to_expr(),
        _ => unreachable!("residual engines return formulas"),
    };
    Ok(FrictionModel::Combined { base: Box::new(base.clone()), residual, residual_features: features.to_vec() })
}

/// `tau_ext_hat = tau_g - tau_m - tau_f_hat` per sample.
pub fn external_torque(model: &FrictionModel, samples: &[JointSample]) -> Vec<f64> {
    samples
        .iter()
        .zip(model.predict(samples))
        .map(|(s, f)| crate::data::external_torque_from(s, f))
        .collect()
}
