//! Joint logs, friction targets, segmentation, feature construction and
//! synthetic data generation.
//!
//! Everything assumes the quasi-static regime, where the motor torque is
//! `tau_m = tau_g - tau_f - tau_ext`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{AsymmetricStribeck, StribeckParams};
use crate::expr::{sign, Expr};
use crate::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("dataset is empty")]
    Empty,
    #[error("time stamps must be strictly increasing (sample {0})")]
    NotIncreasing(usize),
    #[error("non-finite value in sample {0}")]
    NonFinite(usize),
    #[error("sampling interval jitter exceeds 1% of the declared rate at sample {0}")]
    Jitter(usize),
    #[error("unknown feature `{0}` (expected qdot, sgn_qdot, tau_g or sgn_tau_g)")]
    UnknownFeature(String),
    #[error("feature set is empty")]
    NoFeatures,
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("dataset carries no movement labels")]
    NoMovements,
    #[error("cannot train on {n_train} of {movements} movements")]
    TooManyTrain { n_train: usize, movements: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

/// Regression inputs available for friction models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Qdot,
    SgnQdot,
    TauG,
    SgnTauG,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::Qdot, Feature::SgnQdot, Feature::TauG, Feature::SgnTauG];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Qdot => "qdot",
            Feature::SgnQdot => "sgn_qdot",
            Feature::TauG => "tau_g",
            Feature::SgnTauG => "sgn_tau_g",
        }
    }

    pub fn value(self, qdot: f64, tau_g: f64) -> f64 {
        match self {
            Feature::Qdot => qdot,
            Feature::SgnQdot => sign(qdot),
            Feature::TauG => tau_g,
            Feature::SgnTauG => sign(tau_g),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "qdot" => Ok(Feature::Qdot),
            "sgn_qdot" | "sgn(qdot)" | "sign(qdot)" => Ok(Feature::SgnQdot),
            "tau_g" => Ok(Feature::TauG),
            "sgn_tau_g" | "sgn(tau_g)" | "sign(tau_g)" => Ok(Feature::SgnTauG),
            other => Err(DataError::UnknownFeature(other.to_string())),
        }
    }
}

/// Parses a comma-separated feature list such as `qdot,sgn_qdot`.
pub fn parse_features(list: &str) -> Result<Vec<Feature>, DataError> {
    let features = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if features.is_empty() {
        return Err(DataError::NoFeatures);
    }
    Ok(features)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub t: f64,
    pub q: f64,
    pub qdot: f64,
    pub tau_m: f64,
    pub tau_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_ext: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movement: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Measured,
    Synthetic { generator: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDataset {
    pub joint_id: String,
    pub samples: Vec<JointSample>,
    pub sampling_rate: Option<f64>,
    pub provenance: Provenance,
}

impl JointDataset {
    pub fn new(
        joint_id: impl Into<String>,
        samples: Vec<JointSample>,
        sampling_rate: Option<f64>,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        let ds = Self { joint_id: joint_id.into(), samples, sampling_rate, provenance };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.samples.is_empty() {
            return Err(DataError::Empty);
        }
        for (i, s) in self.samples.iter().enumerate() {
            let finite = [s.t, s.q, s.qdot, s.tau_m, s.tau_g].iter().all(|v| v.is_finite())
                && s.tau_ext.is_none_or(f64::is_finite);
            if !finite {
                return Err(DataError::NonFinite(i));
            }
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(DataError::NotIncreasing(i + 1));
            }
        }
        if let Some(rate) = self.sampling_rate {
            if !(rate > 0.0) {
                return Err(DataError::Jitter(0));
            }
            let dt = 1.0 / rate;
            let movement_break = |a: &JointSample, b: &JointSample| a.movement != b.movement;
            for (i, w) in self.samples.windows(2).enumerate() {
                // Gaps between separately recorded movements are not jitter.
                if movement_break(&w[0], &w[1]) {
                    continue;
                }
                if ((w[1].t - w[0].t) - dt).abs() > 0.01 * dt {
                    return Err(DataError::Jitter(i + 1));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn qdot(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.qdot).collect()
    }

    pub fn tau_f(&self) -> Vec<f64> {
        self.samples.iter().map(friction_target).collect()
    }

    pub fn has_external(&self) -> bool {
        self.samples.iter().any(|s| s.tau_ext.is_some())
    }

    pub fn has_movements(&self) -> bool {
        self.samples.iter().all(|s| s.movement.is_some())
    }

    /// Movement ids in order of first appearance with their sample indices.
    pub fn movements(&self) -> Result<Vec<(usize, Vec<usize>)>, DataError> {
        let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            let id = s.movement.ok_or(DataError::NoMovements)?;
            match out.iter_mut().find(|(m, _)| *m == id) {
                Some((_, idx)) => idx.push(i),
                None => out.push((id, vec![i])),
            }
        }
        Ok(out)
    }

    fn with_samples(&self, samples: Vec<JointSample>) -> Self {
        Self {
            joint_id: self.joint_id.clone(),
            samples,
            sampling_rate: self.sampling_rate,
            provenance: self.provenance.clone(),
        }
    }

    /// Reads the CSV format: header `t,q,qdot,tau_m,tau_g` with optional
    /// `tau_ext` and `movement` columns (empty cells mean absent).
    pub fn read_csv<R: Read>(reader: R, joint_id: impl Into<String>, sampling_rate: Option<f64>) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &'static str| headers.iter().position(|h| h == name);
        let need = |name: &'static str| col(name).ok_or(DataError::MissingColumn(name));
        let (ct, cq, cv, cm, cg) = (need("t")?, need("q")?, need("qdot")?, need("tau_m")?, need("tau_g")?);
        let (ce, cmov) = (col("tau_ext"), col("movement"));
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| DataError::BadRow { row: row + 1, message };
            let num = |c: usize| -> Result<f64, DataError> {
                let cell = rec.get(c).unwrap_or("");
                cell.parse::<f64>().map_err(|_| bad(format!("`{cell}` is not a number")))
            };
            let opt = |c: Option<usize>| -> Result<Option<f64>, DataError> {
                match c.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
                    Some(cell) => cell.parse::<f64>().map(Some).map_err(|_| bad(format!("`{cell}` is not a number"))),
                    None => Ok(None),
                }
            };
            let movement = match cmov.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
                Some(cell) => Some(cell.parse::<usize>().map_err(|_| bad(format!("`{cell}` is not a movement id")))?),
                None => None,
            };
            samples.push(JointSample {
                t: num(ct)?,
                q: num(cq)?,
                qdot: num(cv)?,
                tau_m: num(cm)?,
                tau_g: num(cg)?,
                tau_ext: opt(ce)?,
                movement,
            });
        }
        Self::new(joint_id, samples, sampling_rate, Provenance::Measured)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let ext = self.has_external();
        let mov = self.samples.iter().any(|s| s.movement.is_some());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t", "q", "qdot", "tau_m", "tau_g"];
        if ext {
            header.push("tau_ext");
        }
        if mov {
            header.push("movement");
        }
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.t.to_string(), s.q.to_string(), s.qdot.to_string(), s.tau_m.to_string(), s.tau_g.to_string()];
            if ext {
                rec.push(s.tau_ext.map(|v| v.to_string()).unwrap_or_default());
            }
            if mov {
                rec.push(s.movement.map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Friction torque of a quasi-static sample: `tau_g - tau_m`.
pub fn friction_target(s: &JointSample) -> f64 {
    s.tau_g - s.tau_m
}

/// External torque implied by a friction estimate: `tau_g - tau_m - tau_f_hat`.
pub fn external_torque_from(s: &JointSample, tau_f_hat: f64) -> f64 {
    s.tau_g - s.tau_m - tau_f_hat
}

/// Largest finite-difference acceleration estimate within movements. Logs a
/// warning when it exceeds `threshold` (rad/s^2).
pub fn quasi_static_check(ds: &JointDataset, threshold: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for w in ds.samples.windows(2) {
        if w[0].movement != w[1].movement {
            continue;
        }
        let acc = ((w[1].qdot - w[0].qdot) / (w[1].t - w[0].t)).abs();
        worst = worst.max(acc);
    }
    if worst > threshold {
        log::warn!(
            "joint {}: acceleration estimate {worst:.3} rad/s^2 exceeds {threshold} rad/s^2; the quasi-static assumption may not hold",
            ds.joint_id
        );
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// First sample index.
    pub start: usize,
    /// One past the last sample index.
    pub end: usize,
    pub duration: f64,
    pub mean_qdot: f64,
    pub mean_tau_f: f64,
    pub mean_tau_g: f64,
}

fn segment_of(samples: &[JointSample], start: usize, end: usize) -> Segment {
    let run = &samples[start..end];
    let n = run.len() as f64;
    Segment {
        start,
        end,
        duration: run[run.len() - 1].t - run[0].t,
        mean_qdot: run.iter().map(|s| s.qdot).sum::<f64>() / n,
        mean_tau_f: run.iter().map(friction_target).sum::<f64>() / n,
        mean_tau_g: run.iter().map(|s| s.tau_g).sum::<f64>() / n,
    }
}

/// Greedy left-to-right segmentation into maximal runs whose velocities all
/// lie within `tolerance` of the run mean; runs shorter than `min_duration`
/// seconds are dropped and the scan resumes one sample later.
pub fn segment_constant_velocity(ds: &JointDataset, tolerance: f64, min_duration: f64) -> Result<Vec<Segment>, DataError> {
    if !(tolerance > 0.0) {
        return Err(DataError::InvalidTolerance);
    }
    let s = &ds.samples;
    let n = s.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let (mut sum, mut lo, mut hi) = (s[i].qdot, s[i].qdot, s[i].qdot);
        let mut j = i + 1;
        while j < n {
            let v = s[j].qdot;
            let (nsum, nlo, nhi) = (sum + v, lo.min(v), hi.max(v));
            let mean = nsum / (j - i + 1) as f64;
            if nhi - mean > tolerance || mean - nlo > tolerance {
                break;
            }
            (sum, lo, hi) = (nsum, nlo, nhi);
            j += 1;
        }
        if s[j - 1].t - s[i].t >= min_duration {
            out.push(segment_of(s, i, j));
            i = j;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// Per-movement averages, one segment per labelled movement.
pub fn movement_means(ds: &JointDataset) -> Result<Vec<Segment>, DataError> {
    let mut out = Vec::new();
    for (_, idx) in ds.movements()? {
        let start = idx[0];
        let end = idx[idx.len() - 1] + 1;
        if end - start == idx.len() {
            out.push(segment_of(&ds.samples, start, end));
        } else {
            let sub: Vec<JointSample> = idx.iter().map(|&i| ds.samples[i]).collect();
            let mut seg = segment_of(&sub, 0, sub.len());
            (seg.start, seg.end) = (start, end);
            out.push(seg);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionPoint {
    pub features: Vec<f64>,
    pub target: f64,
}

fn check_features(features: &[Feature]) -> Result<(), DataError> {
    if features.is_empty() {
        Err(DataError::NoFeatures)
    } else {
        Ok(())
    }
}

/// One point per sample.
pub fn points_from_samples(samples: &[JointSample], features: &[Feature]) -> Result<Vec<FrictionPoint>, DataError> {
    check_features(features)?;
    Ok(samples
        .iter()
        .map(|s| FrictionPoint {
            features: features.iter().map(|f| f.value(s.qdot, s.tau_g)).collect(),
            target: friction_target(s),
        })
        .collect())
}

/// One point per segment, from the segment means.
pub fn points_from_segments(segments: &[Segment], features: &[Feature]) -> Result<Vec<FrictionPoint>, DataError> {
    check_features(features)?;
    Ok(segments
        .iter()
        .map(|s| FrictionPoint {
            features: features.iter().map(|f| f.value(s.mean_qdot, s.mean_tau_g)).collect(),
            target: s.mean_tau_f,
        })
        .collect())
}

/// Splits points into a feature matrix and a target vector.
pub fn to_matrix(points: &[FrictionPoint]) -> (Matrix, Vec<f64>) {
    let rows: Vec<&[f64]> = points.iter().map(|p| p.features.as_slice()).collect();
    let x = if rows.is_empty() { Matrix::zeros(0, 0) } else { Matrix::from_rows(&rows) };
    (x, points.iter().map(|p| p.target).collect())
}

/// Feature matrix for raw samples.
pub fn feature_matrix(samples: &[JointSample], features: &[Feature]) -> Matrix {
    let cols = features
        .iter()
        .map(|f| samples.iter().map(|s| f.value(s.qdot, s.tau_g)).collect())
        .collect();
    Matrix::from_columns(cols)
}

/// Picks `n_train` movements uniformly without replacement for training and
/// keeps the rest for testing; every movement in both splits is subsampled
/// (order-preserving) to the smallest per-movement count.
pub fn split_movements(ds: &JointDataset, n_train: usize, seed: u64) -> Result<(JointDataset, JointDataset), DataError> {
    let movements = ds.movements()?;
    let m = movements.len();
    if n_train >= m {
        return Err(DataError::TooManyTrain { n_train, movements: m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; m];
    for i in sample(&mut rng, m, n_train) {
        chosen[i] = true;
    }
    let per = movements.iter().map(|(_, idx)| idx.len()).min().unwrap_or(0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, (_, idx)) in movements.iter().enumerate() {
        let mut keep = sample(&mut rng, idx.len(), per).into_vec();
        keep.sort_unstable();
        let picked = keep.into_iter().map(|i| ds.samples[idx[i]]);
        if chosen[k] {
            train.extend(picked);
        } else {
            test.extend(picked);
        }
    }
    // Movements were recorded in time order, so keep the samples sorted.
    train.sort_by(|a, b| a.t.total_cmp(&b.t));
    test.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok((ds.with_samples(train), ds.with_samples(test)))
}

/// Velocity profile of a synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityProfile {
    /// One constant-velocity movement per (load, velocity) pair.
    ConstantGrid {
        velocities: Vec<f64>,
        /// Seconds per movement.
        duration: f64,
        /// Gravity-torque scale factors, one pass over the grid each.
        #[serde(default = "default_loads")]
        loads: Vec<f64>,
    },
    /// Linear ramps to each target velocity followed by a hold.
    Trapezoid { phases: Vec<TrapezoidPhase> },
    /// `offset + amplitude * sin(2 pi frequency t)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        duration: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn default_loads() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidPhase {
    pub velocity: f64,
    pub ramp: f64,
    pub hold: f64,
}

/// Planted friction law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrictionLaw {
    Stribeck { params: StribeckParams },
    Asymmetric { model: AsymmetricStribeck },
    /// A formula over the listed features, in `x0, x1, ...` order.
    Expr { formula: String, features: Vec<Feature> },
}

/// `tau_g = load * (offset + amplitude * sin(q + phase))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GravityLaw {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

impl Default for GravityLaw {
    fn default() -> Self {
        Self { amplitude: 10.0, phase: 0.0, offset: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalWindow {
    pub start: f64,
    pub end: f64,
    pub torque: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_joint")]
    pub joint_id: String,
    /// Sampling rate in Hz.
    pub rate: f64,
    pub profile: VelocityProfile,
    pub friction: FrictionLaw,
    #[serde(default)]
    pub gravity: GravityLaw,
    /// Standard deviation of additive Gaussian noise on `tau_m` (Nm).
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub external: Vec<ExternalWindow>,
    #[serde(default)]
    pub q0: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_joint() -> String {
    "synthetic".to_string()
}

enum Law {
    Sym(StribeckParams),
    Asym(AsymmetricStribeck),
    Formula(Expr, Vec<Feature>),
}

impl Law {
    fn eval(&self, qdot: f64, tau_g: f64) -> f64 {
        match self {
            Law::Sym(p) => p.eval(qdot),
            Law::Asym(m) => m.eval(qdot),
            Law::Formula(e, f) => {
                let row: Vec<f64> = f.iter().map(|f| f.value(qdot, tau_g)).collect();
                e.eval_row(&row)
            }
        }
    }
}

impl SynthSpec {
    fn law(&self) -> Result<Law, DataError> {
        let invalid = |m: String| DataError::InvalidSpec(m);
        Ok(match &self.friction {
            FrictionLaw::Stribeck { params } => {
                params.validate().map_err(|e| invalid(e.to_string()))?;
                Law::Sym(*params)
            }
            FrictionLaw::Asymmetric { model } => {
                model.positive.validate().map_err(|e| invalid(e.to_string()))?;
                model.negative.validate().map_err(|e| invalid(e.to_string()))?;
                Law::Asym(*model)
            }
            FrictionLaw::Expr { formula, features } => {
                let e: Expr = formula.parse().map_err(|e: crate::expr::ParseError| invalid(e.to_string()))?;
                if e.max_var().is_some_and(|v| v >= features.len()) {
                    return Err(invalid(format!("formula uses x{} but only {} features are listed", e.max_var().unwrap(), features.len())));
                }
                Law::Formula(e, features.clone())
            }
        })
    }

    /// `(qdot, movement, load)` per sample.
    fn velocity_plan(&self) -> Result<Vec<(f64, usize, f64)>, DataError> {
        let invalid = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        let count = |secs: f64| (secs * self.rate).round() as usize;
        let mut plan = Vec::new();
        match &self.profile {
            VelocityProfile::ConstantGrid { velocities, duration, loads } => {
                if velocities.is_empty() || loads.is_empty() {
                    return invalid("constant grid needs velocities and loads");
                }
                if !(*duration > 0.0) || count(*duration) == 0 {
                    return invalid("movement duration must cover at least one sample");
                }
                let mut m = 0;
                for &load in loads {
                    for &v in velocities {
                        plan.extend(std::iter::repeat_n((v, m, load), count(*duration)));
                        m += 1;
                    }
                }
            }
            VelocityProfile::Trapezoid { phases } => {
                if phases.is_empty() {
                    return invalid("trapezoid needs at least one phase");
                }
                let mut prev = 0.0;
                for (m, p) in phases.iter().enumerate() {
                    if p.ramp < 0.0 || p.hold < 0.0 {
                        return invalid("ramp and hold must be non-negative");
                    }
                    let nr = count(p.ramp);
                    for i in 0..nr {
                        let frac = (i + 1) as f64 / nr as f64;
                        plan.push((prev + (p.velocity - prev) * frac, m, 1.0));
                    }
                    plan.extend(std::iter::repeat_n((p.velocity, m, 1.0), count(p.hold)));
                    prev = p.velocity;
                }
            }
            VelocityProfile::Sinusoid { amplitude, frequency, duration, offset } => {
                if !(*duration > 0.0) {
                    return invalid("duration must be positive");
                }
                let n = count(*duration);
                for i in 0..n {
                    let t = i as f64 / self.rate;
                    plan.push((offset + amplitude * (std::f64::consts::TAU * frequency * t).sin(), 0, 1.0));
                }
            }
        }
        if plan.is_empty() {
            return invalid("profile produces no samples");
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(DataError::InvalidSpec("rate must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(DataError::InvalidSpec("noise_std must be non-negative".into()));
        }
        if self.external.iter().any(|w| !(w.end > w.start)) {
            return Err(DataError::InvalidSpec("external windows need end > start".into()));
        }
        self.law()?;
        self.velocity_plan()?;
        Ok(())
    }

    fn generator_name(&self) -> String {
        let profile = match self.profile {
            VelocityProfile::ConstantGrid { .. } => "constant_grid",
            VelocityProfile::Trapezoid { .. } => "trapezoid",
            VelocityProfile::Sinusoid { .. } => "sinusoid",
        };
        let law = match self.friction {
            FrictionLaw::Stribeck { .. } => "stribeck",
            FrictionLaw::Asymmetric { .. } => "asymmetric",
            FrictionLaw::Expr { .. } => "expr",
        };
        format!("{profile}/{law}")
    }

    /// Planted friction at a given state.
    pub fn friction_at(&self, qdot: f64, tau_g: f64) -> Result<f64, DataError> {
        Ok(self.law()?.eval(qdot, tau_g))
    }
}

/// Generates a dataset from `spec`: positions integrate the velocity profile
/// and motor torques follow `tau_m = tau_g - tau_f - tau_ext + noise`.
pub fn synth_generate(spec: &SynthSpec) -> Result<JointDataset, DataError> {
    spec.validate()?;
    let law = spec.law()?;
    let plan = spec.velocity_plan()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let dt = 1.0 / spec.rate;
    let g = spec.gravity;
    let labelled = !matches!(spec.profile, VelocityProfile::Sinusoid { .. });
    let mut q = spec.q0;
    let mut samples = Vec::with_capacity(plan.len());
    for (i, &(qdot, movement, load)) in plan.iter().enumerate() {
        let t = i as f64 * dt;
        let tau_g = load * (g.offset + g.amplitude * (q + g.phase).sin());
        let tau_f = law.eval(qdot, tau_g);
        let ext = spec.external.iter().filter(|w| t >= w.start && t < w.end).map(|w| w.torque).sum::<f64>();
        let eps = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        samples.push(JointSample {
            t,
            q,
            qdot,
            tau_m: tau_g - tau_f - ext + eps,
            tau_g,
            tau_ext: (!spec.external.is_empty()).then_some(ext),
            movement: labelled.then_some(movement),
        });
        q += qdot * dt;
    }
    JointDataset::new(
        spec.joint_id.clone(),
        samples,
        Some(spec.rate),
        Provenance::Synthetic { generator: spec.generator_name(), seed: spec.seed },
    )
}
