use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use array_emitters_cli::{exit_code, run, RunOptions, EXIT_COMPUTE, EXIT_CONFIG};

fn bin(dir: &Path, study: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let path = dir.join(format!("{study}.json"));
    std::fs::write(&path, config).unwrap();
    let out = dir.join(format!("out-{study}"));
    let output = Command::new(env!("CARGO_BIN_EXE_array-emitters"))
        .args([study, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .env_remove("ARRAY_EMITTERS_THREADS")
        .output()
        .unwrap();
    (output, out)
}

#[test]
fn unknown_field_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = bin(dir.path(), "band", r#"{"lattice": {"spacing": 0.2, "colour": 1}}"#, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lattice.colour"), "{err}");
}

#[test]
fn wrong_unit_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = bin(dir.path(), "band", r#"{"lattice": {"spacing": "0.2 gamma_L"}}"#, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unit-suffix mismatch"));
}

#[test]
fn study_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = bin(dir.path(), "band", r#"{"study": "dynamics"}"#, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn toy_check_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = bin(dir.path(), "toy-check", r#"{"grids": {"a": [0.1]}}"#, &["--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("toy_check.csv")).unwrap();
    let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "a,configuration,delta,quantity,toy_re,toy_im,generic_re,generic_im,rel_error,status"
    );
    let rows: Vec<_> = lines.collect();
    // 20 detunings × 3 quantities × 2 configurations, plus the dark detuning
    assert_eq!(rows.len(), 121);
    assert!(rows.iter().all(|r| r.ends_with(",ok")));
    assert!(csv.contains("# config_sha256: "));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["study"], "toy-check");
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 121);
    assert!(manifest["summary"]["worst_rel_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn distance_scan_reports_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"lattice": {"n": 8, "spacing": "0.2 lambda"}, "impurity": {"configuration": "orthogonal"}}"#;
    let (o, out) = bin(dir.path(), "distance-scan", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("distance_scan.csv")).unwrap();
    assert!(csv.contains("# fit: ln|Q2| = "));
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 6);
}

#[test]
fn thread_precedence() {
    std::env::set_var("ARRAY_EMITTERS_THREADS", "3");
    assert_eq!(array_emitters_cli::thread_count(Some(5), Some(2)).unwrap(), 5);
    assert_eq!(array_emitters_cli::thread_count(None, Some(2)).unwrap(), 3);
    std::env::set_var("ARRAY_EMITTERS_THREADS", "zero");
    let err = array_emitters_cli::thread_count(None, None).unwrap_err();
    assert_eq!(exit_code(&err), EXIT_CONFIG);
    std::env::remove_var("ARRAY_EMITTERS_THREADS");
    assert_eq!(array_emitters_cli::thread_count(None, Some(2)).unwrap(), 2);
}

#[test]
fn library_run_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"study": "reach-scan", "lattice": {"n": 5}, "grids": {"a": [0.15, 0.25]}}"#).unwrap();
    let opts = RunOptions { study: None, config: config.clone(), out: dir.path().join("o"), threads: Some(1) };
    let m = run(&opts).unwrap();
    assert_eq!(m.outputs, vec!["reach_scan.csv"]);
    assert_eq!(m.cells.len(), 2);

    let missing = RunOptions { config: dir.path().join("absent.json"), ..opts };
    assert_eq!(exit_code(&run(&missing).unwrap_err()), EXIT_CONFIG);
    assert_eq!(exit_code(&anyhow::anyhow!("solver blew up")), EXIT_COMPUTE);
}
