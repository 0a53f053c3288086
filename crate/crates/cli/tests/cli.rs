use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use distress_core::horse_race::default_specs;
use distress_core::panel::load_csv;
use distress_core::synth::{generate_panel, SynthConfig};

const SMALL: &str = r#"
folds = 3
[synth]
n_firms = 300
n_years = 8
hazard_base = 0.02
zombie_share = 0.03
[shap]
n_permutations = 30
max_rows = 300
background = 64
"#;

fn distress(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("small.toml");
    if !cfg.exists() {
        fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_distress"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env_remove("DISTRESS_OUT")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn error_json(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let line = String::from_utf8_lossy(&o.stderr);
    let last = line.lines().last().expect("stderr is empty");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("not JSON ({e}): {last}"))
}

#[test]
fn synth_then_cv_reports_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out_s = out.to_str().unwrap();
    ok(&distress(dir.path(), &["synth", "--seed", "5", "--out", out_s]));
    let panel = out.join("panel.csv");
    assert!(out.join("panel_truth.csv").exists());
    ok(&distress(
        dir.path(),
        &["cv", "--input", panel.to_str().unwrap(), "--seed", "5", "--out", out_s],
    ));

    let mut r = csv::Reader::from_path(out.join("horse_race.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..6], ["method", "AUC", "PR", "F1-Score", "BACC", "R²"]);
    let names: Vec<String> = r.records().map(|rec| rec.unwrap()[0].to_string()).collect();
    let expected: Vec<String> = default_specs().into_iter().map(|s| s.name).collect();
    assert_eq!(names, expected);
}

#[test]
fn panel_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&distress(dir.path(), &["synth", "--seed", "11", "--out", out.to_str().unwrap()]));
    let loaded = load_csv(out.join("panel.csv"), None).unwrap();
    let cfg = SynthConfig {
        seed: 11,
        n_firms: 300,
        n_years: 8,
        hazard_base: 0.02,
        zombie_share: 0.03,
        ..SynthConfig::default()
    };
    let fresh = generate_panel(&cfg).unwrap().panel;
    assert_eq!(loaded.feature_names(), fresh.feature_names());
    assert_eq!(loaded.records().len(), fresh.records().len());
    for (a, b) in loaded.records().iter().zip(fresh.records()) {
        assert_eq!((&a.firm_id, a.year, a.failed), (&b.firm_id, b.year, b.failed));
        assert_eq!(a.features, b.features);
    }
}

#[test]
fn all_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&distress(dir.path(), &["all", "--seed", "7", "--out", a.to_str().unwrap()]));
    ok(&distress(
        dir.path(),
        &["all", "--seed", "7", "--jobs", "1", "--out", b.to_str().unwrap()],
    ));
    let (fa, fb) = (read_dir_bytes(&a), read_dir_bytes(&b));
    for name in [
        "horse_race.csv",
        "oof_predictions.csv",
        "percentile_report.csv",
        "decile_thresholds.csv",
        "zombie_flags.csv",
        "bacc_scan.csv",
        "shapley.csv",
        "shapley_groups.csv",
    ] {
        assert!(fa.contains_key(name), "{name} not written");
    }
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between runs");
    }
}

#[test]
fn different_seed_changes_the_panel() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&distress(dir.path(), &["synth", "--seed", "1", "--out", a.to_str().unwrap()]));
    ok(&distress(dir.path(), &["synth", "--seed", "2", "--out", b.to_str().unwrap()]));
    assert_ne!(fs::read(a.join("panel.csv")).unwrap(), fs::read(b.join("panel.csv")).unwrap());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = distress(dir.path(), &["cv", "--input", "/nonexistent/panel.csv", "--out", dir.path().to_str().unwrap()]);
    let v = error_json(&o);
    assert_eq!(v["error"], "IoError");
    assert!(v["message"].as_str().unwrap().len() > 0);
}

#[test]
fn malformed_panel_reports_core_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "firm_id,year,failed,x\nA,2001,0,1.0\nA,2002,maybe,2.0\n").unwrap();
    let o = distress(dir.path(), &["cv", "--input", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(error_json(&o)["error"], "BadLabel");
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "folds = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_distress"))
        .args(["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(error_json(&o)["error"], "ConfigError");

    fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_distress"))
        .args(["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(error_json(&o)["error"], "ConfigError");
}

#[test]
fn unknown_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[synth]\nn_firms = 100\n[zombie]\nmodel = \"nope\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_distress"))
        .args(["zombie", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(error_json(&o)["error"], "ConfigError");
}

#[test]
fn default_config_parses_back() {
    let o = Command::new(env!("CARGO_BIN_EXE_distress"))
        .arg("default-config")
        .output()
        .unwrap();
    ok(&o);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.toml");
    fs::write(&cfg, &o.stdout).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_distress"))
        .args(["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    ok(&o);
}
