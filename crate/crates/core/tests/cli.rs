use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_photon-filter");

fn run(mode: &str, config: &str, dir: &Path, extra: &[&str]) -> std::process::Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .arg(mode)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("PHOTON_FILTER_THREADS")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join("out").join(name)).unwrap()
}

#[test]
fn master_outputs_are_deterministic() {
    let cfg = r#"{"T": 2.0, "observables": ["sx", "sz"]}"#;
    let a = tempfile::tempdir().unwrap();
    assert!(run("master", cfg, a.path(), &[]).status.success());
    let first: Vec<Vec<u8>> = ["master.csv", "report.json"]
        .map(|f| read(a.path(), f))
        .into();
    assert!(run("master", cfg, a.path(), &[]).status.success());
    for (f, before) in ["master.csv", "report.json"].iter().zip(first) {
        assert_eq!(read(a.path(), f), before, "{f}");
    }
    let csv = String::from_utf8(read(a.path(), "master.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,mu11_sx_re,mu11_sx_im,mu10_sx_re"));
    assert_eq!(csv.lines().count(), 2002);
    // 17 significant digits
    let first = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(first.split('e').next().unwrap().len(), 18);
}

#[test]
fn trajectory_seed_override_is_deterministic() {
    let cfg = r#"{"T": 1.0, "dt_sde": 1e-3, "seed": 1, "observables": ["sz"]}"#;
    let files = ["trajectory.csv", "record.txt", "report.json"];
    let (a, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run("trajectory", cfg, a.path(), &["--seed", "5"])
        .status
        .success());
    let first: Vec<Vec<u8>> = files.map(|f| read(a.path(), f)).into();
    assert!(run("trajectory", cfg, a.path(), &["--seed", "5"])
        .status
        .success());
    for (f, before) in files.iter().zip(first) {
        assert_eq!(read(a.path(), f), before, "{f}");
    }
    assert!(run("trajectory", cfg, c.path(), &[]).status.success());
    assert_ne!(read(a.path(), "record.txt"), read(c.path(), "record.txt"));
    let csv = String::from_utf8(read(a.path(), "trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,pi11_sz,ext_sz,Y,W");
}

#[test]
fn record_driven_run_reproduces_generated_trajectory() {
    let a = tempfile::tempdir().unwrap();
    let cfg = r#"{"T": 1.0, "dt_sde": 1e-3, "seed": 3, "observables": ["sz"]}"#;
    assert!(run("trajectory", cfg, a.path(), &[]).status.success());
    let rec = a.path().join("out").join("record.txt");
    let b = tempfile::tempdir().unwrap();
    let cfg2 = format!(
        r#"{{"T": 1.0, "dt_sde": 1e-3, "seed": 3, "observables": ["sz"], "record": {:?}}}"#,
        rec.to_str().unwrap()
    );
    assert!(run("trajectory", &cfg2, b.path(), &[]).status.success());
    assert_eq!(
        read(a.path(), "trajectory.csv"),
        read(b.path(), "trajectory.csv")
    );
}

#[test]
fn ensemble_csv_has_reference_columns() {
    let a = tempfile::tempdir().unwrap();
    let cfg = r#"{"T": 2.0, "dt_sde": 1e-3, "observables": ["sz"], "checkpoint_interval": 0.5}"#;
    let out = run("ensemble", cfg, a.path(), &["--n-traj", "8"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(read(a.path(), "ensemble.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,mean_sz,stderr_sz,mu11_sz");
    assert_eq!(csv.lines().count(), 6);
    let report: serde_json::Value = serde_json::from_slice(&read(a.path(), "report.json")).unwrap();
    assert_eq!(report["config"]["n_traj"], 8);
}

#[test]
fn missing_dt_sde_fails_with_key_name() {
    let a = tempfile::tempdir().unwrap();
    let out = run("trajectory", "{}", a.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt_sde"));
}

#[test]
fn malformed_config_reports_position() {
    let a = tempfile::tempdir().unwrap();
    let out = run(
        "master",
        "{\n  \"T\": 1.0,\n  \"dt_ode\" 1e-3\n}",
        a.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}
