use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use rarepp_cli::plot::{emit_plot_data, read_table, tables, PlotKind};
use rarepp_cli::{run_experiment, CliError, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rarepp"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoke() -> String {
    std::fs::read_to_string(configs().join("smoke.toml")).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run_cli(config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn smoke_bundle_has_theta() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&configs().join("smoke.toml"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bundle.json")).unwrap()).unwrap();
    let theta = b["results"][0]["theta"]["theta"].as_f64().unwrap();
    assert!(theta > 0.0 && theta <= 1.0);
    assert_eq!(b["seed_ledger"]["master"], 1);
    assert_eq!(b["reference_measure"], "lebesgue");
}

#[test]
fn same_seed_gives_identical_bundles() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    assert!(run_cli(&cfg, a.path(), &["--threads", "1"]).status.success());
    assert!(run_cli(&cfg, b.path(), &[]).status.success());
    let x = std::fs::read(a.path().join("bundle.json")).unwrap();
    let y = std::fs::read(b.path().join("bundle.json")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn seed_flag_changes_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    assert!(run_cli(&cfg, a.path(), &[]).status.success());
    assert!(run_cli(&cfg, b.path(), &["--seed", "2"]).status.success());
    let x: Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("bundle.json")).unwrap()).unwrap();
    let y: Value = serde_json::from_str(&std::fs::read_to_string(b.path().join("bundle.json")).unwrap()).unwrap();
    assert_eq!(y["seed_ledger"]["master"], 2);
    assert_ne!(x["results"][0]["seed"], y["results"][0]["seed"]);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &smoke().replace("n_grid = [1000]", "n_grid = [1000, 10]"));
    assert_eq!(run_cli(&bad, dir.path(), &[]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(run_cli(&missing, dir.path(), &[]).status.code(), Some(2));
    let syntax = write_config(dir.path(), "name = ");
    assert_eq!(run_cli(&syntax, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn failed_assertions_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\n[assert]\ntheta_range = [0.99, 1.0]\n", smoke());
    let cfg = write_config(dir.path(), &text);
    let out = run_cli(&cfg, dir.path(), &["--assert"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL theta_range"));

    let text = format!("{}\n[assert]\ntheta_range = [0.3, 1.0]\n", smoke());
    let cfg = write_config(dir.path(), &text);
    let out = run_cli(&cfg, dir.path(), &["--assert"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS theta_range"));
}

#[test]
fn numerical_failures_map_to_3() {
    assert_eq!(CliError::Core(rarepp::Error::Numerical("x".into())).exit_code(), 3);
    assert_eq!(
        CliError::Core(rarepp::Error::InvalidParameter {
            name: "tau",
            reason: "x".into()
        })
        .exit_code(),
        2
    );
}

#[test]
fn unknown_plot_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_cli(&configs().join("smoke.toml"), dir.path(), &[]).status.success());
    let out = bin()
        .args(["plot"])
        .arg(dir.path().join("bundle.json"))
        .args(["--kind", "histogram"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!("histogram".parse::<PlotKind>().is_err());
}

#[test]
fn csv_tables_round_trip_the_bundle() {
    let cfg = ExperimentConfig::parse(&smoke().replace("n_grid = [1000]", "n_grid = [1000, 2000]")).unwrap();
    let exp = run_experiment(&cfg).unwrap();
    let bundle: Value = serde_json::from_str(&exp.bundle.to_json()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in PlotKind::ALL {
        let expected = tables(&bundle, kind).unwrap();
        let files = emit_plot_data(&bundle, kind, dir.path()).unwrap();
        assert_eq!(files.len(), expected.len());
        for (f, t) in files.iter().zip(&expected) {
            let (header, rows) = read_table(f).unwrap();
            assert_eq!(header, kind.columns());
            assert_eq!(rows, t.rows, "{}", f.display());
        }
    }
    let theta = tables(&bundle, PlotKind::ThetaVsN).unwrap();
    assert_eq!(theta[0].rows.len(), 2);
    for (row, r) in theta[0].rows.iter().zip(&exp.bundle.results) {
        assert_eq!(row[0], Some(r.n as f64));
        assert_eq!(row[1], r.theta.map(|t| t.theta));
    }
    let ecdf = tables(&bundle, PlotKind::EcdfVsPi).unwrap();
    assert!(ecdf.iter().all(|t| t.header == ["x", "ecdf", "pi_theory"]));
    assert_eq!(bundle["csv_manifest"]["laplace_grid"][1], "y");
}

#[test]
fn estimate_q_finds_the_period() {
    let text = smoke()
        .replace("n_grid = [1000]", "n_grid = [1000, 10000]")
        .replace("ensemble = 1000", "ensemble = 2000");
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let est = rarepp_cli::estimate_q_for(&cfg).unwrap();
    assert_eq!(est.status, rarepp::pointprocess::QStatus::Determined { q: 1 });

    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &text.replace("q = 1", "q = \"estimate\""));
    let out = bin().arg("estimate-q").arg(&p).output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"]["q"], 1);
}

#[test]
fn measures_are_written_and_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\n[output]\nmeasures = 2\n", smoke());
    let cfg = write_config(dir.path(), &text);
    assert!(run_cli(&cfg, dir.path(), &[]).status.success());
    let m = std::fs::read_to_string(dir.path().join("measure_n1000_orbit1.txt")).unwrap();
    rarepp::pointprocess::MarkedMeasure::from_text(&m).unwrap();
}

#[test]
fn random_system_uses_marginal_threshold() {
    let text = r#"
name = "random-smoke"
seed = 3
tau = 1.0
n_grid = [1000]
ensemble = 1000
q = 0
mark_type = "POT"

[system]
kind = "random"
alphabet = [2.0, 3.0]
weights = [0.5, 0.5]

[observable]
zeta = 0.41421356237309503
g = { type = "neg_log" }

[theory]
target = { kind = "aperiodic" }
"#;
    let exp = run_experiment(&ExperimentConfig::parse(text).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&exp.bundle.to_json()).unwrap();
    assert_eq!(b["reference_measure"], "sample_measure");
    assert_eq!(b["results"][0]["threshold"]["source"], "marginal_mc");
    let bad = text.replace("{ kind = \"aperiodic\" }", "{ kind = \"interior_periodic\", p = 1 }");
    assert!(ExperimentConfig::parse(&bad).is_err());
}

#[test]
fn selftest_passes() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
