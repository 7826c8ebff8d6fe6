//! Command-level invariants, run in-process. Shared by the `invariants`
//! test target and the acceptance harness.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fricsym_cli::manifest::{sha256_hex, RunManifest, MANIFEST_FILE};
use fricsym_cli::{try_run, CliError, EXIT_FIT, EXIT_INPUT, EXIT_MISMATCH, EXIT_OK};
use fricsym_core::baseline::StribeckParams;
use fricsym_core::data::{synth_generate, ExternalWindow, FrictionLaw, GravityLaw, SynthSpec, VelocityProfile};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use tempfile::TempDir;

pub type Property = fn(u32) -> Result<(), String>;

pub const PROPERTIES: &[(&str, Property)] = &[
    ("cli: identical inputs give byte-identical reports", end_to_end_determinism),
    ("cli: exit codes follow the contract", exit_code_contract),
    ("cli: manifest lists every artifact", manifest_complete),
];

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Baseline and GP settings small enough for thousands of runs.
pub const QUICK_CONFIG: &str = r#"{
  "baseline": {"starts": 1, "basin": {"iterations": 1, "local_budget": 200}},
  "gp": {"islands": 2, "population": 12, "generations": 4, "tournament_size": 4, "const_opt_budget": 20},
  "parfam": {"basin": {"iterations": 1, "local_budget": 100}, "finetune_budget": 100}
}"#;

pub fn code(result: Result<(), CliError>) -> i32 {
    result.map_or_else(|e| e.exit_code(), |()| EXIT_OK)
}

pub fn exec(args: &[&str]) -> i32 {
    code(try_run(std::iter::once("fricsym").chain(args.iter().copied())))
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("temporary paths are UTF-8")
}

pub fn spec_json(velocities: &[f64], noise: f64, seed: u64, external: Option<f64>) -> String {
    let spec = SynthSpec {
        joint_id: "p".into(),
        rate: 50.0,
        profile: VelocityProfile::ConstantGrid { velocities: velocities.to_vec(), duration: 0.4, loads: vec![1.0] },
        friction: FrictionLaw::Stribeck { params: StribeckParams::new(2.0, 3.0, 1.5, 0.2, 2.0).unwrap() },
        gravity: GravityLaw::default(),
        noise_std: noise,
        external: external.map(|torque| vec![ExternalWindow { start: 0.2, end: 0.6, torque }]).unwrap_or_default(),
        q0: 0.0,
        seed,
    };
    serde_json::to_string(&spec).unwrap()
}

pub fn write_data(dir: &Path, name: &str, velocities: &[f64], noise: f64, seed: u64) -> PathBuf {
    let spec: SynthSpec = serde_json::from_str(&spec_json(velocities, noise, seed, None)).unwrap();
    let mut buf = Vec::new();
    synth_generate(&spec).unwrap().write_csv(&mut buf).unwrap();
    let path = dir.join(name);
    fs::write(&path, buf).unwrap();
    path
}

fn velocities() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(0.05..2.0f64, 6..10), prop::collection::vec(-2.0..-0.05f64, 6..10)).prop_map(|(p, n)| p.into_iter().chain(n).collect())
}

pub fn end_to_end_determinism(cases: u32) -> Result<(), String> {
    check(cases, (velocities(), 0.0..0.1f64, any::<u64>(), prop::bool::ANY), |(v, noise, seed, gp)| {
        let tmp = TempDir::new().unwrap();
        let d = tmp.path();
        fs::write(d.join("spec.json"), spec_json(&v, noise, seed, None)).unwrap();
        fs::write(d.join("cfg.json"), QUICK_CONFIG).unwrap();
        let (spec, cfg) = (d.join("spec.json"), d.join("cfg.json"));
        let method = if gp { "gp" } else { "sym" };
        for run in ["a", "b"] {
            let synth_out = d.join(format!("synth_{run}"));
            prop_assert_eq!(exec(&["synth", "--spec", path_str(&spec), "--out-dir", path_str(&synth_out)]), EXIT_OK);
            let data = synth_out.join("data.csv");
            let fit_out = d.join(format!("fit_{run}"));
            let args = ["fit", "--data", path_str(&data), "--method", method, "--config", path_str(&cfg), "--seed", "7", "--out-dir", path_str(&fit_out)];
            prop_assert_eq!(exec(&args), EXIT_OK);
        }
        for file in ["synth_{}/data.csv", "synth_{}/data.json", "fit_{}/report.json", "fit_{}/report.txt", "fit_{}/model.json"] {
            let a = fs::read(d.join(file.replace("{}", "a"))).unwrap();
            let b = fs::read(d.join(file.replace("{}", "b"))).unwrap();
            prop_assert!(a == b, "{} differs between identical runs", file);
        }
        Ok(())
    })
}

#[derive(Debug, Clone)]
enum Scenario {
    Synth(Vec<f64>),
    MissingSpec,
    GarbageSpec(String),
    UnknownFeature(String),
    UnknownMethod(String),
    OneSidedAsym(Vec<f64>),
    ModelArity(usize),
    ResidualQdot,
    CorruptCsv(usize, String),
}

fn scenario() -> impl Strategy<Value = Scenario> {
    prop_oneof![
        velocities().prop_map(Scenario::Synth),
        Just(Scenario::MissingSpec),
        "[a-z{}\\[\\]:,\" ]{0,40}".prop_map(Scenario::GarbageSpec),
        "[a-z]{1,8}".prop_filter("not a feature", |s| s.parse::<fricsym_core::data::Feature>().is_err()).prop_map(Scenario::UnknownFeature),
        "[a-z]{1,8}".prop_filter("not a method", |s| !matches!(s.as_str(), "sym" | "asym" | "gp" | "parfam")).prop_map(Scenario::UnknownMethod),
        prop::collection::vec(0.05..2.0f64, 2..6).prop_map(Scenario::OneSidedAsym),
        (1..4usize).prop_map(Scenario::ModelArity),
        Just(Scenario::ResidualQdot),
        (1..40usize, "[a-z]{1,5}").prop_map(|(row, junk)| Scenario::CorruptCsv(row, junk)),
    ]
}

pub fn exit_code_contract(cases: u32) -> Result<(), String> {
    check(cases, scenario(), |sc| {
        let tmp = TempDir::new().unwrap();
        let d = tmp.path();
        let out = d.join("out");
        let out_s = path_str(&out).to_string();
        fs::write(d.join("cfg.json"), QUICK_CONFIG).unwrap();
        let cfg = d.join("cfg.json");
        let data = write_data(d, "d.csv", &[-1.0, -0.3, 0.3, 1.0], 0.01, 1);
        let model = d.join("model.json");
        fs::write(&model, r#"{"kind":"symbolic","formula":{"op":"mul","args":[{"const":2.0},{"var":0}]},"features":["qdot"]}"#).unwrap();
        let (got, want) = match &sc {
            Scenario::Synth(v) => {
                fs::write(d.join("s.json"), spec_json(v, 0.0, 0, None)).unwrap();
                (exec(&["synth", "--spec", path_str(&d.join("s.json")), "--out-dir", &out_s]), EXIT_OK)
            }
            Scenario::MissingSpec => (exec(&["synth", "--spec", path_str(&d.join("none.json")), "--out-dir", &out_s]), EXIT_INPUT),
            Scenario::GarbageSpec(text) => {
                fs::write(d.join("s.json"), text).unwrap();
                (exec(&["synth", "--spec", path_str(&d.join("s.json")), "--out-dir", &out_s]), EXIT_INPUT)
            }
            Scenario::UnknownFeature(f) => (
                exec(&["fit", "--data", path_str(&data), "--method", "gp", "--features", f, "--config", path_str(&cfg), "--out-dir", &out_s]),
                EXIT_INPUT,
            ),
            Scenario::UnknownMethod(m) => (exec(&["fit", "--data", path_str(&data), "--method", m, "--out-dir", &out_s]), EXIT_INPUT),
            Scenario::OneSidedAsym(v) => {
                let one = write_data(d, "pos.csv", v, 0.01, 2);
                (exec(&["fit", "--data", path_str(&one), "--method", "asym", "--config", path_str(&cfg), "--out-dir", &out_s]), EXIT_FIT)
            }
            Scenario::ModelArity(k) => {
                let text = format!(r#"{{"kind":"symbolic","formula":{{"var":{k}}},"features":["qdot"]}}"#);
                fs::write(&model, text).unwrap();
                (exec(&["eval", "--model", path_str(&model), "--data", path_str(&data), "--out-dir", &out_s]), EXIT_MISMATCH)
            }
            Scenario::ResidualQdot => (
                exec(&["adapt", "--model", path_str(&model), "--data", path_str(&data), "--features", "tau_g,qdot", "--config", path_str(&cfg), "--out-dir", &out_s]),
                EXIT_MISMATCH,
            ),
            Scenario::CorruptCsv(row, junk) => {
                let text = fs::read_to_string(&data).unwrap();
                let mut lines: Vec<String> = text.lines().map(String::from).collect();
                let i = (*row).clamp(1, lines.len() - 1);
                lines[i] = lines[i].replacen(',', &format!(",{junk}"), 1);
                fs::write(&data, lines.join("\n")).unwrap();
                (exec(&["eval", "--model", path_str(&model), "--data", path_str(&data), "--out-dir", &out_s]), EXIT_INPUT)
            }
        };
        prop_assert_eq!(got, want, "{:?}", sc);
        Ok(())
    })
}

fn assert_manifest(out: &Path) -> Result<(), TestCaseError> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    let listed: BTreeSet<String> = manifest.outputs.iter().cloned().chain([MANIFEST_FILE.to_string()]).collect();
    let present: BTreeSet<String> = fs::read_dir(out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    prop_assert_eq!(listed, present);
    for input in &manifest.inputs {
        prop_assert_eq!(&input.sha256, &sha256_hex(&fs::read(&input.path).unwrap()));
    }
    Ok(())
}

pub fn manifest_complete(cases: u32) -> Result<(), String> {
    check(cases, (velocities(), 0..4usize, prop::bool::ANY), |(v, command, external)| {
        let tmp = TempDir::new().unwrap();
        let d = tmp.path();
        fs::write(d.join("spec.json"), spec_json(&v, 0.01, 3, external.then_some(1.5))).unwrap();
        fs::write(d.join("cfg.json"), QUICK_CONFIG).unwrap();
        let synth_out = d.join("synth");
        prop_assert_eq!(exec(&["synth", "--spec", path_str(&d.join("spec.json")), "--out-dir", path_str(&synth_out)]), EXIT_OK);
        let data = synth_out.join("data.csv");
        let fit_out = d.join("fit");
        let cfg = d.join("cfg.json");
        let fit = ["fit", "--data", path_str(&data), "--method", "sym", "--config", path_str(&cfg), "--out-dir", path_str(&fit_out)];
        let model = fit_out.join("model.json");
        let out = d.join("cmd");
        let code = match command {
            0 => {
                assert_manifest(&synth_out)?;
                return Ok(());
            }
            1 => exec(&fit),
            2 => {
                prop_assert_eq!(exec(&fit), EXIT_OK);
                exec(&["eval", "--model", path_str(&model), "--data", path_str(&data), "--out-dir", path_str(&out)])
            }
            _ => {
                prop_assert_eq!(exec(&fit), EXIT_OK);
                exec(&["external", "--model", path_str(&model), "--data", path_str(&data), "--out-dir", path_str(&out)])
            }
        };
        prop_assert_eq!(code, EXIT_OK);
        assert_manifest(if command == 1 { &fit_out } else { &out })
    })
}
