use std::fs;
use std::path::Path;
use std::time::Instant;

use fricsym_cli::report::{ExternalReport, MetricsReport};
use fricsym_core::baseline::{fit_asymmetric, fit_symmetric, AsymmetricStribeck, BaselineFitConfig, StribeckParams};
use fricsym_core::data::{ExternalWindow, Feature, FrictionLaw, GravityLaw, SynthSpec, VelocityProfile};
use fricsym_core::expr::sign;
use fricsym_core::gp::{evolve, GpConfig};
use fricsym_core::model::FrictionModel;
use fricsym_core::numopt::{basin_hopping, BasinHoppingConfig, Bounds, Objective};
use fricsym_core::parfam::{parfam_extract, parfam_fit, Degrees, ParFamFitConfig, ParFamStructure};
use fricsym_core::{parse, FunctionSet, Matrix, UnaryFn};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

use crate::cli_props::{exec, path_str};
use crate::{cli_props, props, Outcome};

type Criterion = (&'static str, fn() -> Outcome);

pub const ALL: [Criterion; 12] = [
    ("baseline fidelity", baseline_fidelity),
    ("asymmetry detection", asymmetry_detection),
    ("GP recovery of a planted law", gp_recovery),
    ("GP beats the baseline on Stribeck-shaped data", gp_beats_baseline),
    ("ParFam affine subcase equals least squares", parfam_affine_exact),
    ("ParFam recovery of a planted law", parfam_recovery),
    ("basin hopping on Rastrigin", optimizer_quality),
    ("complexity anchors", complexity_anchors),
    ("residual adaptation", residual_adaptation),
    ("external torque estimation", external_torque),
    ("determinism of every fit command", determinism),
    ("invariant suites at 1000 cases", invariants),
];

fn symmetric_plant() -> StribeckParams {
    StribeckParams::new(1193.0, 8.629, 14.44, 47.65, 8.827).unwrap()
}

fn asymmetric_plant() -> AsymmetricStribeck {
    AsymmetricStribeck::new(
        StribeckParams::new(264.3, 8.002, 14.10, 95.33, 92.98).unwrap(),
        StribeckParams::new(773.6, 8.629, 14.44, 69.23, 52.20).unwrap(),
    )
    .unwrap()
}

/// `n` evenly spaced points on `[-r, r]`, shifted off the grid by `offset`
/// spacings.
fn linspace(n: usize, r: f64, offset: f64) -> Vec<f64> {
    (0..n).map(|i| -r + 2.0 * r * (i as f64 + offset) / n as f64).collect()
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn baseline_fidelity() -> Outcome {
    let p = symmetric_plant();
    let q = linspace(2000, 2.0, 0.5);
    let y: Vec<f64> = q.iter().map(|v| p.eval(*v)).collect();
    let start = Instant::now();
    let fit = fit_symmetric(&q, &y, &BaselineFitConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pred: Vec<f64> = q.iter().map(|v| fit.params.eval(*v)).collect();
    let err = mae(&pred, &y);
    Outcome::new(err <= 1e-3 && secs <= 60.0, format!("MAE {err:.2e} Nm (limit 1e-3), fit {secs:.2} s (limit 60 s)"))
}

fn asymmetry_detection() -> Outcome {
    let m = asymmetric_plant();
    let q = linspace(2000, 2.0, 0.5);
    let y: Vec<f64> = q.iter().map(|v| m.eval(*v)).collect();
    let cfg = BaselineFitConfig::default();
    let start = Instant::now();
    let asym = fit_asymmetric(&q, &y, &cfg).unwrap();
    let sym = fit_symmetric(&q, &y, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let asym_mae = mae(&q.iter().map(|v| asym.model.eval(*v)).collect::<Vec<_>>(), &y);
    let sym_mae = mae(&q.iter().map(|v| sym.params.eval(*v)).collect::<Vec<_>>(), &y);
    Outcome::new(
        asym_mae <= 1e-2 && sym_mae >= 3.0 * asym_mae && secs <= 120.0,
        format!("asymmetric MAE {asym_mae:.2e} Nm (limit 1e-2), symmetric MAE {sym_mae:.3} Nm (needs >= 3x), {secs:.1} s"),
    )
}

fn gp_recovery() -> Outcome {
    let q = linspace(500, 2.0, 0.5);
    let y: Vec<f64> = q.iter().map(|v| 2.0 * v + 3.0 * sign(*v)).collect();
    let x = Matrix::column_vector(q);
    let mut hits = 0;
    let mut slowest: f64 = 0.0;
    for seed in 0..10 {
        let start = Instant::now();
        let cfg = GpConfig { seed, generations: 40, ..GpConfig::default() };
        let archive = evolve(&x, &y, &FunctionSet::default(), &cfg).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        hits += usize::from(archive.iter().any(|g| g.loss <= 1e-6 && g.complexity <= 7));
    }
    Outcome::new(hits >= 8 && slowest <= 60.0, format!("{hits}/10 seeds found MSE <= 1e-6 at complexity <= 7, slowest seed {slowest:.1} s"))
}

fn gp_beats_baseline() -> Outcome {
    let truth = parse("-4.283 * x0^4 * sgn(x0) + (8.452 - 0.215 * sgn(x0)) * (1.842 * x0 + sgn(x0) - 0.049)").unwrap();
    let sigma = 0.05;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut make = |n: usize, offset: f64| {
        let q = linspace(n, 1.5, offset);
        let clean: Vec<f64> = q.iter().map(|v| truth.eval_row(&[*v])).collect();
        let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
        (q, clean, noisy)
    };
    let (q_train, _, y_train) = make(400, 0.25);
    let (q_test, clean_test, y_test) = make(200, 0.5);
    let floor = mae(&clean_test, &y_test);
    let features = |q: &[f64]| Matrix::from_columns(vec![q.to_vec(), q.iter().map(|v| sign(*v)).collect()]);

    let start = Instant::now();
    let cfg = GpConfig { seed: 0, generations: 600, islands: 32, population: 25, ..GpConfig::default() };
    let archive = evolve(&features(&q_train), &y_train, &FunctionSet::default(), &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let best = archive.best().unwrap();
    let gp_mae = mae(&best.expr.evaluate(&features(&q_test)).unwrap(), &y_test);

    let sym = fit_symmetric(&q_train, &y_train, &BaselineFitConfig::default()).unwrap();
    let sym_mae = mae(&q_test.iter().map(|v| sym.params.eval(*v)).collect::<Vec<_>>(), &y_test);
    Outcome::new(
        gp_mae <= 1.2 * floor && gp_mae < sym_mae && secs <= 300.0,
        format!(
            "GP test MAE {gp_mae:.4} Nm = {:.2} x noise floor {floor:.4} (limit 1.2), baseline {sym_mae:.4} Nm, GP {secs:.0} s",
            gp_mae / floor
        ),
    )
}

fn parfam_affine_exact() -> Outcome {
    let config = Config { cases: 20, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let problems = props::parfam::affine_problem();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (x, y) = problems.new_tree(&mut runner).unwrap().current();
        let s = ParFamStructure::new(x.n_cols(), vec![], vec![], Degrees::new(1, 0)).unwrap();
        let fit = parfam_fit(&x, &y, &s, &ParFamFitConfig { seed, ..ParFamFitConfig::default() }).unwrap();
        let oracle = props::parfam::ols_oracle(&x, &y);
        assert_eq!(fit.theta.len(), oracle.len());
        worst = fit.theta.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Outcome::new(worst <= 1e-6, format!("20 problems, largest coefficient deviation {worst:.1e} (limit 1e-6)"))
}

fn parfam_recovery() -> Outcome {
    let q = linspace(200, 2.0, 0.0);
    let y: Vec<f64> = q.iter().map(|v| 3.0 * (-v * v).exp() * v).collect();
    let x = Matrix::column_vector(q);
    let s = ParFamStructure::new(1, vec![UnaryFn::Exp], vec![Degrees::new(2, 0)], Degrees::new(2, 0)).unwrap();
    let mut hits = 0;
    let mut slowest: f64 = 0.0;
    let mut example = String::new();
    for seed in 0..10 {
        let start = Instant::now();
        let fit = parfam_fit(&x, &y, &s, &ParFamFitConfig { seed, ..ParFamFitConfig::default() }).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        if fit.report.train_mse <= 1e-6 && fit.report.nonzeros <= 6 {
            hits += 1;
            if example.is_empty() {
                example = parfam_extract(&s, &fit.theta, 0.0).unwrap().to_string();
            }
        }
    }
    Outcome::new(
        hits >= 7 && slowest <= 180.0,
        format!("{hits}/10 seeds reached MSE <= 1e-6 with <= 6 coefficients, slowest seed {slowest:.1} s, e.g. {example}"),
    )
}

fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos()).sum::<f64>()
}

fn optimizer_quality() -> Outcome {
    // Grid oracle: the global minimum on the box is 0 at the origin.
    let grid: Vec<f64> = (0..=1024).map(|i| -5.12 + 10.24 * i as f64 / 1024.0).collect();
    let (mut grid_min, mut grid_arg) = (f64::INFINITY, [0.0, 0.0]);
    for a in &grid {
        for b in &grid {
            let f = rastrigin(&[*a, *b]);
            if f < grid_min {
                (grid_min, grid_arg) = (f, [*a, *b]);
            }
        }
    }
    let oracle_ok = grid_min.abs() <= 1e-12 && grid_arg == [0.0, 0.0];

    let bounds = Bounds::new(vec![-5.12; 2], vec![5.12; 2]).unwrap();
    let obj = Objective::new(2, rastrigin).with_bounds(bounds).unwrap();
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = [rng.random_range(-5.12..5.12), rng.random_range(-5.12..5.12)];
        let cfg = BasinHoppingConfig { iterations: 200, step_size: 1.0, seed, ..BasinHoppingConfig::default() };
        let r = basin_hopping(&obj, &x0, &cfg).unwrap();
        hits += usize::from(r.f <= 1e-6);
    }
    Outcome::new(
        oracle_ok && hits >= 80,
        format!("{hits}/100 seeds reached f <= 1e-6 in 200 hops (limit 80); grid oracle minimum {grid_min:.1e}"),
    )
}

fn complexity_anchors() -> Outcome {
    // The symbolic-regression rows take sgn(qdot) as input x1.
    let rows: [(&str, &str, usize); 3] = [
        ("ParFam", "(3.66 * x0 + 8.52 * x1 - 0.44) * exp(-0.78 * x0^2 + 1.26 * abs(x0) + 0.02 * x0 - 0.02 * x1)", 22),
        ("PySR", "-4.283 * x0^4 * x1 + (8.452 - 0.215 * x1) * (1.842 * x0 + x1 - 0.049)", 15),
        (
            "uDSR",
            "-8.083 * x0^3 + 4.643 * x0^2 * x1 - 0.068 * x0^2 - 0.639 * abs(x0) + 13.609 * x0 + 0.827 * x1 \
             + 0.827 * x1 + exp(x0) + exp(exp(x1)) - 9.899",
            36,
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let printed_sym = parse("sgn(x0) * (1193 + (8.629 - 1193) * exp(-abs(x0 / 47.65)^8.827)) + 14.44 * x0").unwrap().complexity();
    let sym = FrictionModel::Symmetric { params: symmetric_plant() }.complexity();
    let asym = FrictionModel::Asymmetric { model: asymmetric_plant() }.complexity();
    pass &= sym == 20 && asym == 40 && printed_sym == 20;
    parts.push(format!("symmetric {sym}/20, asymmetric {asym}/40"));
    for (name, text, printed) in rows {
        let c = parse(text).unwrap().complexity();
        pass &= c.abs_diff(printed) <= 3;
        parts.push(format!("{name} {c}/{printed}"));
    }
    Outcome::new(pass, format!("computed/printed: {}", parts.join(", ")))
}

fn dataset_a_spec(friction: FrictionLaw, loads: Vec<f64>, noise: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        joint_id: "joint2".into(),
        rate: 100.0,
        profile: VelocityProfile::ConstantGrid { velocities: linspace(18, 1.5, 0.5), duration: 1.0, loads },
        friction,
        gravity: GravityLaw { amplitude: 12.0, phase: 0.3, offset: 2.0 },
        noise_std: noise,
        external: Vec::new(),
        q0: 0.0,
        seed,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn synth_into(dir: &Path, name: &str, spec: &SynthSpec) -> std::path::PathBuf {
    let spec_path = dir.join(format!("{name}.json"));
    write_json(&spec_path, spec);
    let out = dir.join(name);
    assert_eq!(exec(&["synth", "--spec", path_str(&spec_path), "--out-dir", path_str(&out)]), 0, "synth {name}");
    out.join("data.csv")
}

fn read_metrics(dir: &Path) -> MetricsReport {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn residual_adaptation() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let plant = symmetric_plant();
    let base_data = synth_into(d, "a", &dataset_a_spec(FrictionLaw::Stribeck { params: plant }, vec![1.0], 0.05, 1));
    let fit_out = d.join("base");
    assert_eq!(exec(&["fit", "--data", path_str(&base_data), "--method", "sym", "--seed", "1", "--out-dir", path_str(&fit_out)]), 0);

    let formula = format!("{} + 0.5 * sgn(x0) * (1 + 0.1 * x1)", plant.to_expr(0));
    let shifted = FrictionLaw::Expr { formula, features: vec![Feature::Qdot, Feature::TauG] };
    let adapt_data = synth_into(d, "b", &dataset_a_spec(shifted, vec![0.5, 1.0, 1.5], 0.05, 2));
    let base_model = fit_out.join("model.json");
    let cfg = d.join("adapt.json");
    fs::write(&cfg, r#"{"gp": {"generations": 150}}"#).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for method in ["gp", "parfam"] {
        let out = d.join(format!("adapt_{method}"));
        let args = ["adapt", "--model", path_str(&base_model), "--data", path_str(&adapt_data), "--method", method, "--config", path_str(&cfg), "--seed", "1", "--out-dir", path_str(&out)];
        assert_eq!(exec(&args), 0, "adapt {method}");
        let rows = read_metrics(&out).rows;
        let (base, adapted) = (rows[0].mae, rows[1].mae);
        pass &= base >= 5.0 * adapted;
        parts.push(format!("{method}: {base:.3} -> {adapted:.3} Nm ({:.1}x)", base / adapted));
    }
    Outcome::new(pass, format!("base vs adapted MAE, {} (limit 5x)", parts.join(", ")))
}

fn external_torque() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let plant = symmetric_plant();
    let sigma = 0.05;
    let train = synth_into(d, "a", &dataset_a_spec(FrictionLaw::Stribeck { params: plant }, vec![1.0], sigma, 3));
    let fit_out = d.join("fit");
    assert_eq!(exec(&["fit", "--data", path_str(&train), "--method", "sym", "--seed", "1", "--out-dir", path_str(&fit_out)]), 0);

    let window = ExternalWindow { start: 4.0, end: 10.0, torque: 2.0 };
    let mut spec = dataset_a_spec(FrictionLaw::Stribeck { params: plant }, vec![1.3], sigma, 4);
    spec.external = vec![window];
    let data = synth_into(d, "b", &spec);
    let out = d.join("ext");
    let model_path = fit_out.join("model.json");
    assert_eq!(exec(&["external", "--model", path_str(&model_path), "--data", path_str(&data), "--out-dir", path_str(&out)]), 0);
    let report: ExternalReport = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();

    let model: FrictionModel = serde_json::from_slice(&fs::read(&model_path).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(&data).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (t_col, v_col) = (col("t"), col("qdot"));
    let rows: Vec<(f64, f64)> = rdr.records().map(|r| {
        let r = r.unwrap();
        (r[t_col].parse().unwrap(), r[v_col].parse().unwrap())
    }).collect();
    let eps = rows.iter().map(|(_, v)| (model.predict_one(*v, 0.0) - plant.eval(*v)).abs()).sum::<f64>() / rows.len() as f64;

    let mut ext = csv::Reader::from_path(out.join("external.csv")).unwrap();
    let est: Vec<f64> = ext.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    let inside: Vec<f64> = rows.iter().zip(&est).filter(|((t, _), _)| *t >= window.start && *t < window.end).map(|(_, e)| *e).collect();
    let window_mean = inside.iter().sum::<f64>() / inside.len() as f64;
    let ext_mae = report.mae.unwrap();
    Outcome::new(
        ext_mae <= eps + sigma && (window_mean - 2.0).abs() <= 0.15 * 2.0,
        format!("external MAE {ext_mae:.4} Nm (limit eps {eps:.4} + sigma {sigma}), window mean {window_mean:.3} Nm (2 Nm +- 15%)"),
    )
}

fn determinism() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut spec = dataset_a_spec(FrictionLaw::Stribeck { params: symmetric_plant() }, vec![1.0], 0.05, rng.random());
    spec.profile = VelocityProfile::ConstantGrid { velocities: linspace(12, 1.5, 0.5), duration: 0.5, loads: vec![1.0] };
    let data = synth_into(d, "d", &spec);
    let cfg = d.join("cfg.json");
    fs::write(&cfg, r#"{"gp": {"generations": 20}, "parfam": {"basin": {"iterations": 5}}}"#).unwrap();
    let mut differing = Vec::new();
    let mut runs = Vec::new();
    let commands: [(&str, Vec<&str>); 5] = [
        ("sym", vec!["fit", "--method", "sym"]),
        ("asym", vec!["fit", "--method", "asym"]),
        ("gp", vec!["fit", "--method", "gp"]),
        ("parfam", vec!["fit", "--method", "parfam"]),
        ("adapt", vec!["adapt", "--model"]),
    ];
    for (name, prefix) in &commands {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = d.join(format!("{name}_{run}"));
            let mut args = prefix.clone();
            let model = d.join("sym_0").join("model.json");
            if *name == "adapt" {
                args.push(path_str(&model));
            }
            args.extend(["--data", path_str(&data), "--config", path_str(&cfg), "--seed", "9", "--out-dir", path_str(&out)]);
            assert_eq!(exec(&args), 0, "{name} run {run}");
            outputs.push((fs::read(out.join("report.json")).unwrap(), fs::read(out.join("model.json")).unwrap()));
        }
        if outputs[0] != outputs[1] {
            differing.push(*name);
        }
        runs.push(*name);
    }
    Outcome::new(
        differing.is_empty(),
        format!("{} rerun with seed 9; differing: {}", runs.join(", "), if differing.is_empty() { "none".into() } else { differing.join(", ") }),
    )
}

fn invariants() -> Outcome {
    const CASES: u32 = 1000;
    let all: Vec<(&str, props::Property)> = props::all().into_iter().chain(cli_props::PROPERTIES.iter().copied()).collect();
    let mut failures = Vec::new();
    for (name, prop) in &all {
        if let Err(e) = prop(CASES) {
            failures.push(format!("{name}: {}", e.lines().next().unwrap_or_default()));
        }
    }
    let detail = if failures.is_empty() {
        format!("{}/{} properties held at {CASES} cases each", all.len(), all.len())
    } else {
        format!("{} of {} properties failed: {}", failures.len(), all.len(), failures.join("; "))
    };
    Outcome::new(failures.is_empty(), detail)
}
