use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaprisk"))
}

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_config(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

fn run(config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.arg("run").arg("--config").arg(config).arg("--out").arg(out);
    if let Some(t) = threads {
        cmd.env("GAPRISK_THREADS", t);
    }
    cmd.output().unwrap()
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not json ({e}): {line}"))
}

fn small_wrong_way() -> Value {
    serde_json::json!({
        "name": "small",
        "collateral": { "source": "preset", "name": "spx-2008-2013" },
        "credit": { "mode": "logou-params", "k": 0.5, "sigma_c": 1.5, "lambda_0": 0.143 },
        "terms": { "correlation": -0.9 },
        "target": { "rating": "Aa2" },
        "mc": { "n_paths": 400, "seed": 7 },
        "run": { "kind": "haircut", "correlations": [-0.9, 0.5] }
    })
}

fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path)
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(String::from)
        .collect()
}

#[test]
fn shipped_examples_validate() {
    for entry in std::fs::read_dir(examples()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let out = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            let status: Value = serde_json::from_slice(&out.stdout).unwrap();
            assert_eq!(status["status"], "ok");
        }
    }
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "config");
    assert_eq!(rec["exit_code"], 2);
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_wrong_way();
    cfg["terms"]["hair_cut"] = 0.1.into();
    let path = write_config(dir.path(), "typo", &cfg);
    let out = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("hair_cut"));
}

#[test]
fn seed_is_required() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_wrong_way();
    cfg["mc"] = serde_json::json!({ "n_paths": 400 });
    let path = write_config(dir.path(), "noseed", &cfg);
    let out = run(&path, &dir.path().join("o"), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn out_of_range_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_wrong_way();
    cfg["terms"]["correlation"] = 1.5.into();
    cfg["run"] = serde_json::json!({ "kind": "haircut" });
    let path = write_config(dir.path(), "rho", &cfg);
    let out = run(&path, &dir.path().join("o"), None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "missing",
        "mc": { "seed": 1 },
        "run": { "kind": "historical-var", "price_csv": "nowhere.csv", "windows_days": [10] }
    });
    let path = write_config(dir.path(), "missing", &cfg);
    let v = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(v.status.code(), Some(3));
    let out = run(&path, &dir.path().join("o"), None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "data");
}

#[test]
fn unattainable_target_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "unattainable",
        "collateral": {
            "source": "params",
            "mu": 0.0, "sigma": 5.0, "jump_intensity": 0.0, "p_up": 0.5, "eta_up": 50.0, "eta_down": 50.0
        },
        "credit": { "mode": "asset-only" },
        "terms": { "recovery": 0.0 },
        "target": { "kind": "expected-loss", "level": 1e-30 },
        "mc": { "seed": 1 },
        "run": { "kind": "haircut" }
    });
    let path = write_config(dir.path(), "unattainable", &cfg);
    let out = run(&path, &dir.path().join("o"), None);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "solver");
    assert_eq!(rec["exit_code"], 4);
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small", &small_wrong_way());
    let out = run(&path, &dir.path().join("o"), Some("many"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_prices_give_zero_var() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "flat",
        "mc": { "seed": 1 },
        "run": { "kind": "historical-var", "price_csv": fixture("constant_price.csv"), "windows_days": [10] }
    });
    let path = write_config(dir.path(), "flat", &cfg);
    let out_dir = dir.path().join("o");
    let out = run(&path, &out_dir, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(out_dir.join("results.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let var_col = rdr.headers().unwrap().iter().position(|h| h == "var").unwrap();
    assert_eq!(rows[0][var_col].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small", &small_wrong_way());
    let (a, b) = (dir.path().join("t1"), dir.path().join("t4"));
    assert!(run(&path, &a, Some("1")).status.success());
    assert!(run(&path, &b, Some("4")).status.success());
    let bytes = |d: &Path| std::fs::read(d.join("results.csv")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));

    let manifest: Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["n_paths"], 400);
    assert_eq!(manifest["threads"], 4);
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small", &small_wrong_way());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&path, &a, None).status.success());
    let out = bin()
        .args(["run", "--seed", "8", "--paths", "300", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 8);
    assert_eq!(manifest["n_paths"], 300);
    assert_ne!(std::fs::read(a.join("results.csv")).unwrap(), std::fs::read(b.join("results.csv")).unwrap());
}

#[test]
fn monte_carlo_columns_carry_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_wrong_way();
    cfg["tail"] = serde_json::json!({ "q": 0.999, "measure": "es" });
    cfg["run"] = serde_json::json!({
        "kind": "sweep-haircut",
        "haircuts": [0.0, 0.05, 0.1],
        "roe": 0.1,
        "regulatory": {},
        "charge_limit_bp": 5.0
    });
    let path = write_config(dir.path(), "sweep", &cfg);
    let out_dir = dir.path().join("o");
    let out = run(&path, &out_dir, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cols = header(&out_dir.join("results.csv"));
    for c in ["el", "var", "es", "ec", "capital_charge", "total_charge"] {
        assert!(cols.iter().any(|h| h == &format!("{c}_stderr")), "{c}: {cols:?}");
    }
    assert!(header(&out_dir.join("min_haircuts.csv")).contains(&"charge_stderr".to_string()));

    let haircut = dir.path().join("h");
    let hp = write_config(dir.path(), "small", &small_wrong_way());
    assert!(run(&hp, &haircut, None).status.success());
    let cols = header(&haircut.join("results.csv"));
    assert!(cols.contains(&"metric_stderr".to_string()));
    assert!(cols.contains(&"default_probability_stderr".to_string()));
}
