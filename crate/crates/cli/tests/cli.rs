use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn orbitfix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbitfix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn stdout_paths(out: &Output) -> Vec<PathBuf> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(PathBuf::from)
        .collect()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn doppler_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = orbitfix(&["doppler", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let paths = stdout_paths(&res);
    assert!(paths.iter().all(|p| p.exists()));
    let csv = paths.iter().find(|p| p.ends_with("leo_doppler.csv")).unwrap();
    assert_eq!(
        header(csv),
        "geometry,range_m,range_rate_m_s,range_accel_m_s2,doppler_hz,doppler_rate_hz_s"
    );
    let manifest = fs::read_to_string(out.join("leo_doppler_manifest.json")).unwrap();
    assert!(manifest.contains("\"config_hash\"") && manifest.contains("\"seeds\""));
}

#[test]
fn zero_duration_condition_is_an_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"duration": 0}"#);
    let out = dir.path().join("o");
    let res = orbitfix(&["condition", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let text = fs::read_to_string(out.join("leo_condition.csv")).unwrap();
    assert_eq!(text, "time_s,condition_number\n");
}

#[test]
fn unknown_key_fails_with_config_category() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"foo": 1}"#);
    let res = orbitfix(&["doppler", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("error[config]") && err.contains("foo"), "{err}");
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{\n  \"elevation_mask\": ,\n}");
    let res = orbitfix(&["doppler", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn missing_config_is_an_io_error() {
    let res = orbitfix(&["doppler", "--config", "/nonexistent/orbitfix.json"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error[io]"));
}

#[test]
fn position_schema_dump_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"duration": 0.5}"#);
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("o{k}"));
        let dump = out.join("meas.csv");
        let res = orbitfix(&[
            "position",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "2",
            "--out",
            out.to_str().unwrap(),
            "--dump-measurements",
            dump.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        assert_eq!(
            header(&out.join("leo_position_joint_seed001.csv")),
            "time_s,horizontal_err_m,vertical_err_m,fixed_accepted"
        );
        assert!(out.join("leo_position_joint_seed002.csv").exists());
        assert!(!out.join("leo_position_joint_seed003.csv").exists());
        assert_eq!(header(&dump), "time_s,receiver,sat_id,pseudorange_m,phase_cycles,true_N");
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn compare_prints_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"duration": 1.0, "seeds": [1, 2, 3]}"#);
    let out = dir.path().join("o");
    let res = orbitfix(&[
        "compare",
        "--experiment",
        "ambiguity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("compare_ambiguity.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "system,metric,converged,convergence_time_s,final_value,unit"
    );
    assert!(lines.next().unwrap().starts_with("leo,median_max_ambiguity_error,1,"));
    assert!(lines.next().unwrap().starts_with("gnss,"));
    assert!(out.join("gnss_ambiguity_manifest.json").exists());
    assert!(String::from_utf8_lossy(&res.stderr).contains("converged"));
}

#[test]
fn unknown_experiment_is_rejected() {
    let res = orbitfix(&["compare", "--experiment", "foo"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error[invalid-input]"));
}

#[test]
fn bad_worker_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"duration": 0.2}"#);
    let res = Command::new(env!("CARGO_BIN_EXE_orbitfix"))
        .args(["ambiguity", "--config", cfg.to_str().unwrap(), "--seeds", "1", "--out"])
        .arg(dir.path().join("o"))
        .env("ORBITFIX_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("ORBITFIX_WORKERS"));

    let ok = Command::new(env!("CARGO_BIN_EXE_orbitfix"))
        .args(["ambiguity", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--out"])
        .arg(dir.path().join("o"))
        .env("ORBITFIX_WORKERS", "1")
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
}

#[test]
fn zero_seeds_rejected() {
    let res = orbitfix(&["ambiguity", "--seeds", "0"]);
    assert_eq!(res.status.code(), Some(2));
}
