//! The five subcommands.

use std::path::Path;

use fricsym_core::baseline::BaselineError;
use fricsym_core::data::{
    friction_target, parse_features, quasi_static_check, split_movements, synth_generate, DataError, Feature, JointDataset,
    Provenance, SynthSpec,
};
use fricsym_core::gp::GpError;
use fricsym_core::model::{adapt_residual, external_torque, fit_model, FitConfig, FitMethod, FrictionModel, ModelError};
use fricsym_core::parfam::ParFamError;
use serde::{Deserialize, Serialize};

use crate::manifest::Run;
use crate::report::{mae, mse, ExternalReport, MetricRow, MetricsReport};
use crate::{AdaptArgs, CliError, EvalArgs, FitArgs, SynthArgs};

pub const DATA_FILE: &str = "data.csv";
pub const DATA_META_FILE: &str = "data.json";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const EXTERNAL_FILE: &str = "external.csv";

/// Settings read from `--config`. Fit settings sit at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub fit: FitConfig,
    /// Seed for every stochastic stage unless `--seed` is given.
    pub seed: Option<u64>,
    /// Share of labelled movements held out for testing; 0 disables the split.
    pub test_fraction: f64,
    /// Exact number of training movements; overrides `test_fraction`.
    pub train_movements: Option<usize>,
    /// Acceleration (rad/s^2) above which a quasi-static warning is logged.
    pub quasi_static_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            seed: None,
            test_fraction: 0.1,
            train_movements: None,
            quasi_static_threshold: 0.5,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn model_error(e: ModelError) -> CliError {
    let msg = e.to_string();
    match e {
        ModelError::Data(_) | ModelError::MissingQdot(_) | ModelError::ExternalTorque => CliError::Input(msg),
        ModelError::FeatureMismatch(_) | ModelError::ResidualFeature(_) => CliError::Mismatch(msg),
        ModelError::Gp(GpError::InvalidConfig(_)) => CliError::Input(msg),
        ModelError::ParFam(ParFamError::InvalidConfig(_) | ParFamError::InvalidStructure(_)) => CliError::Input(msg),
        ModelError::ParFam(ParFamError::ThetaLength { .. } | ParFamError::Arity { .. }) => CliError::Mismatch(msg),
        ModelError::Baseline(BaselineError::InvalidParams(_)) => CliError::Input(msg),
        ModelError::Baseline(_) | ModelError::Gp(_) | ModelError::ParFam(_) | ModelError::NoPoints => CliError::Fit(msg),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load_dataset(run: &mut Run, path: &Path) -> Result<JointDataset, CliError> {
    let bytes = run.read_input(path)?;
    let id = path.file_stem().map_or_else(|| "joint".to_string(), |s| s.to_string_lossy().into_owned());
    JointDataset::read_csv(bytes.as_slice(), id, None).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_config(run: &mut Run, path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let bytes = run.read_input(p)?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

/// Loads a model artifact and checks that it is internally consistent.
pub fn load_model(run: &mut Run, path: &Path) -> Result<FrictionModel, CliError> {
    let bytes = run.read_input(path)?;
    let model: FrictionModel =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    model.check().map_err(model_error)?;
    Ok(model)
}

fn csv_bytes(ds: &JointDataset) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).map_err(input)?;
    Ok(buf)
}

fn metric_row(model: &FrictionModel, method: &str, split: &str, ds: &JointDataset) -> Result<MetricRow, CliError> {
    let pred = model.predict(&ds.samples);
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(CliError::Fit(format!("model predicts non-finite friction on the {split} data")));
    }
    let target = ds.tau_f();
    Ok(MetricRow {
        method: method.to_string(),
        split: split.to_string(),
        samples: ds.len(),
        mae: mae(&pred, &target),
        mse: mse(&pred, &target),
        complexity: model.complexity(),
        formula: model.formula(),
    })
}

fn variables(model: &FrictionModel) -> Vec<String> {
    model.expressions().1.iter().map(|f| f.name().to_string()).collect()
}

fn write_report(run: &mut Run, report: &MetricsReport) -> Result<(), CliError> {
    run.write_json(REPORT_JSON, report)?;
    run.write(REPORT_TEXT, report.to_text().as_bytes())
}

fn effective_seed(arg: Option<u64>, cfg: &mut RunConfig) -> Option<u64> {
    let seed = arg.or(cfg.seed);
    if let Some(s) = seed {
        cfg.fit = cfg.fit.clone().with_seed(s);
        cfg.seed = Some(s);
    }
    seed
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut run = Run::new("synth", &args.out_dir);
    let bytes = run.read_input(&args.spec)?;
    let mut spec: SynthSpec =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    run.seed(Some(spec.seed));
    run.config(&spec);
    let ds = synth_generate(&spec).map_err(input)?;
    let meta = DatasetMeta::of(&ds);
    run.write(DATA_FILE, &csv_bytes(&ds)?)?;
    run.write_json(DATA_META_FILE, &meta)?;
    run.finish()?;
    Ok(())
}

/// Descriptive metadata written next to synthesized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub joint_id: String,
    pub samples: usize,
    pub movements: Option<usize>,
    pub sampling_rate: Option<f64>,
    pub has_external_torque: bool,
    pub provenance: Provenance,
}

impl DatasetMeta {
    pub fn of(ds: &JointDataset) -> Self {
        Self {
            joint_id: ds.joint_id.clone(),
            samples: ds.len(),
            movements: ds.movements().ok().map(|m| m.len()),
            sampling_rate: ds.sampling_rate,
            has_external_torque: ds.has_external(),
            provenance: ds.provenance.clone(),
        }
    }
}

fn split(ds: &JointDataset, cfg: &RunConfig, seed: u64) -> Result<(JointDataset, Option<JointDataset>, String), CliError> {
    let movements = match ds.movements() {
        Ok(m) => m.len(),
        Err(DataError::NoMovements) => return Ok((ds.clone(), None, "all samples".into())),
        Err(e) => return Err(input(e)),
    };
    let n_train = match cfg.train_movements {
        Some(n) => n,
        None if cfg.test_fraction <= 0.0 || movements < 2 => return Ok((ds.clone(), None, "all samples".into())),
        None => movements - ((movements as f64 * cfg.test_fraction).round() as usize).clamp(1, movements - 1),
    };
    let (train, test) = split_movements(ds, n_train, seed).map_err(input)?;
    let desc = format!("{n_train} of {movements} movements for training (seed {seed})");
    Ok((train, Some(test), desc))
}

fn default_features(method: FitMethod) -> Vec<Feature> {
    match method {
        FitMethod::Sym | FitMethod::Asym => vec![Feature::Qdot],
        FitMethod::Gp | FitMethod::Parfam => vec![Feature::Qdot, Feature::SgnQdot],
    }
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let mut run = Run::new("fit", &args.out_dir);
    let method: FitMethod = args.method.parse().map_err(CliError::Input)?;
    let features = match &args.features {
        Some(list) => parse_features(list).map_err(input)?,
        None => default_features(method),
    };
    let mut cfg = load_config(&mut run, args.config.as_deref())?;
    let ds = load_dataset(&mut run, &args.data)?;
    let seed = effective_seed(args.seed, &mut cfg);
    run.seed(seed);
    run.config(&cfg);
    quasi_static_check(&ds, cfg.quasi_static_threshold);

    let (train, test, split_desc) = split(&ds, &cfg, seed.unwrap_or(0))?;
    let model = fit_model(&train, &features, method, &cfg.fit).map_err(model_error)?;
    let name = method.to_string();
    let mut rows = vec![metric_row(&model, &name, "train", &train)?];
    if let Some(test) = &test {
        rows.push(metric_row(&model, &name, "test", test)?);
    }
    let report = MetricsReport {
        command: "fit".into(),
        dataset: file_name(&args.data),
        split: split_desc,
        variables: variables(&model),
        rows,
    };
    run.write_json(MODEL_FILE, &model)?;
    write_report(&mut run, &report)?;
    if let Some(test) = &test {
        run.write(TRAIN_FILE, &csv_bytes(&train)?)?;
        run.write(TEST_FILE, &csv_bytes(test)?)?;
    }
    run.finish()?;
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let mut run = Run::new("eval", &args.out_dir);
    let model = load_model(&mut run, &args.model)?;
    let ds = load_dataset(&mut run, &args.data)?;
    let row = metric_row(&model, model.method_name(), "all", &ds)?;
    let pred = model.predict(&ds.samples);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "tau_f", "tau_f_hat", "error"]).map_err(input)?;
    for (s, p) in ds.samples.iter().zip(&pred) {
        let tau_f = friction_target(s);
        w.write_record([s.t.to_string(), tau_f.to_string(), p.to_string(), (p - tau_f).to_string()]).map_err(input)?;
    }
    let csv = w.into_inner().map_err(input)?;
    let report = MetricsReport {
        command: "eval".into(),
        dataset: file_name(&args.data),
        split: "all samples".into(),
        variables: variables(&model),
        rows: vec![row],
    };
    write_report(&mut run, &report)?;
    run.write(PREDICTIONS_FILE, &csv)?;
    run.finish()?;
    Ok(())
}

pub fn adapt(args: &AdaptArgs) -> Result<(), CliError> {
    let mut run = Run::new("adapt", &args.out_dir);
    let method: FitMethod = args.method.parse().map_err(CliError::Input)?;
    if !matches!(method, FitMethod::Gp | FitMethod::Parfam) {
        return Err(CliError::Input(format!("residual engine must be gp or parfam, got {method}")));
    }
    let features = parse_features(&args.features).map_err(input)?;
    let mut cfg = load_config(&mut run, args.config.as_deref())?;
    let base = load_model(&mut run, &args.model)?;
    let ds = load_dataset(&mut run, &args.data)?;
    let seed = effective_seed(args.seed, &mut cfg);
    run.seed(seed);
    run.config(&cfg);
    quasi_static_check(&ds, cfg.quasi_static_threshold);

    let adapted = adapt_residual(&base, &ds, &features, method, &cfg.fit).map_err(model_error)?;
    let rows = vec![
        metric_row(&base, base.method_name(), "adaptation", &ds)?,
        metric_row(&adapted, &format!("{}+{}", base.method_name(), method), "adaptation", &ds)?,
    ];
    let report = MetricsReport {
        command: "adapt".into(),
        dataset: file_name(&args.data),
        split: "all samples".into(),
        variables: variables(&adapted),
        rows,
    };
    run.write_json(MODEL_FILE, &adapted)?;
    write_report(&mut run, &report)?;
    run.finish()?;
    Ok(())
}

pub fn external(args: &EvalArgs) -> Result<(), CliError> {
    let mut run = Run::new("external", &args.out_dir);
    let model = load_model(&mut run, &args.model)?;
    let ds = load_dataset(&mut run, &args.data)?;
    let est = external_torque(&model, &ds.samples);
    if est.iter().any(|e| !e.is_finite()) {
        return Err(CliError::Fit("model predicts non-finite friction".into()));
    }
    let truth = ds.has_external();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: &[&str] = if truth { &["t", "tau_ext_hat", "tau_ext", "error"] } else { &["t", "tau_ext_hat"] };
    w.write_record(header).map_err(input)?;
    let (mut abs_sum, mut n_truth) = (0.0, 0usize);
    for (s, e) in ds.samples.iter().zip(&est) {
        let mut rec = vec![s.t.to_string(), e.to_string()];
        if truth {
            match s.tau_ext {
                Some(m) => {
                    rec.push(m.to_string());
                    rec.push((e - m).to_string());
                    abs_sum += (e - m).abs();
                    n_truth += 1;
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec).map_err(input)?;
    }
    let csv = w.into_inner().map_err(input)?;
    let report = ExternalReport {
        command: "external".into(),
        dataset: file_name(&args.data),
        method: model.method_name().into(),
        samples: ds.len(),
        mae: (n_truth > 0).then(|| abs_sum / n_truth as f64),
        mean_estimate: est.iter().sum::<f64>() / est.len() as f64,
        max_abs_estimate: est.iter().fold(0.0, |m, e| m.max(e.abs())),
    };
    run.write(EXTERNAL_FILE, &csv)?;
    run.write_json(REPORT_JSON, &report)?;
    run.write(REPORT_TEXT, report.to_text().as_bytes())?;
    run.finish()?;
    Ok(())
}
