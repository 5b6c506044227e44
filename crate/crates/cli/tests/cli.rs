use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vbess_core::timeseries::read_profiles;

fn vbess(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbess"))
        .args(args)
        .env_remove("VBESS_OUT_DIR")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    let cfg = serde_json::json!({
        "seed": 11,
        "trials": 2,
        "num_steps": 48,
        "history_days": 1,
        "pool": { "size": 12 },
        "out_dir": dir.join("out"),
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

fn solar_total(path: &Path, steps: usize) -> f64 {
    let homes = read_profiles(std::fs::File::open(path).unwrap(), steps).unwrap();
    homes.iter().flat_map(|h| &h.solar_kw).sum()
}

#[test]
fn generate_writes_deterministic_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = vbess(&["generate", "--seed", "1", "--homes", "3", "--days", "2", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let homes = read_profiles(std::fs::File::open(&a).unwrap(), 96).unwrap();
    assert_eq!(homes.len(), 3);
    assert!(homes.iter().all(|h| h.len() == 96));
}

#[test]
fn winter_has_less_solar_than_summer() {
    let dir = tempfile::tempdir().unwrap();
    let mut totals = Vec::new();
    for season in ["summer", "winter"] {
        let out = dir.path().join(format!("{season}.csv"));
        let o = vbess(&["generate", "--homes", "4", "--days", "3", "--season", season, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        totals.push(solar_total(&out, 144));
    }
    assert!(totals[1] < totals[0], "{totals:?}");
}

#[test]
fn run_writes_requested_scheme_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = vbess(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--schemes",
        "joint,individual",
        "--controller",
        "foresight",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&dir.path().join("out/study_report.csv"));
    assert!(lines[0].starts_with("trial_seed,scheme,controller,cost_usd"));
    let schemes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(schemes, ["no_bess", "joint", "individual", "no_bess", "joint", "individual"]);
}

#[test]
fn embedded_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = vbess(&["run", "--config", cfg.to_str().unwrap(), "--schemes", "hybrid"]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/study_summary.json")).unwrap()).unwrap();
    let embedded = dir.path().join("embedded.json");
    std::fs::write(&embedded, summary["config"].to_string()).unwrap();
    let again = dir.path().join("again");
    let o = vbess(&["run", "--config", embedded.to_str().unwrap(), "--out-dir", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("out/study_report.csv")).unwrap(),
        std::fs::read(again.join("study_report.csv")).unwrap()
    );
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let env_out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_vbess"))
        .args(["run", "--config", cfg.to_str().unwrap(), "--schemes", "joint", "--trials", "1"])
        .env("VBESS_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("study_report.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trails": 3}"#).unwrap();
    let o = vbess(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));
}

#[test]
fn sweep_rows_and_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = vbess(&["sweep", "--config", cfg.to_str().unwrap(), "--fractions", "0,0.5,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&dir.path().join("out/partition_sweep.csv"));
    assert_eq!(lines[0], "fraction_shared,trial_seed,cost_usd");
    assert_eq!(lines.len(), 1 + 3 * 2);
    let rows: Vec<(f64, String, f64)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    for (f, seed, cost) in rows.iter().filter(|r| r.0 == 1.0) {
        let at_zero = rows.iter().find(|r| r.0 == 0.0 && &r.1 == seed).unwrap();
        assert!(cost <= &(at_zero.2 + 1e-6), "{f} {seed}: {cost} > {}", at_zero.2);
    }
}

#[test]
fn sweep_rejects_fraction_outside_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = vbess(&["sweep", "--config", cfg.to_str().unwrap(), "--fractions", "0,1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_scheme_flag_is_a_usage_error() {
    let o = vbess(&["run", "--schemes", "communal"]);
    assert_eq!(o.status.code(), Some(2));
}
