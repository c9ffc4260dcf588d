use std::path::Path;
use std::process::{Command, Output};

fn stlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const MINIMAL: &str = "name = \"minimal\"\nt_final = 2.0\n\n[grid]\nnx = 16\nnz = 17\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn minimal_config_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = stlab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["timeseries.csv", "rearrangement.csv", "report.json", "manifest.json", "scenario.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_config_fails_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("nz = 17", "nz = 4"));
    let o = stlab(&["--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 6") && err.contains("nz"), "{err}");
}

#[test]
fn missing_inputs_are_errors() {
    assert_ne!(stlab(&[]).status.code(), Some(0));
    assert_eq!(stlab(&["--bundled", "nope"]).status.code(), Some(1));
    let o = stlab(&["--list"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l == "stab"));
}

#[test]
fn bundled_stab_reports_fit_and_acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stab");
    let o = stlab(&["--bundled", "stab", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("fit_exponent:l2_theta_fluct"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scenario"], "stab");
    // acceptance mode maps any failed interval to exit code 2
    let all_pass = stdout.lines().all(|l| !l.starts_with("FAIL"));
    let o = stlab(&["--bundled", "stab", "--accept", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 2 }));
}

#[test]
fn exact_linear_needs_linear_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = stlab(&["--bundled", "stab", "--exact-linear", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn repeated_runs_write_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(stlab(&["--config", &cfg, "--out", d.to_str().unwrap(), "--threads", "2"]).status.code(), Some(0));
    }
    for f in ["timeseries.csv", "manifest.json", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
