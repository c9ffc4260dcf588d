use stlab::dynamics::Mode;
use stlab::scenario::*;

const MINIMAL: &str = r#"
name = "minimal"
t_final = 2.0

[grid]
nx = 16
nz = 17
"#;

#[test]
fn minimal_config_uses_defaults() {
    let sc = Scenario::from_toml(MINIMAL).unwrap();
    assert_eq!(sc.name, "minimal");
    assert_eq!(sc.mode, Mode::Nonlinear);
    assert_eq!(sc.grid.height, 1.0);
    assert_eq!(sc.diagnostics.lambdas, vec![0.25, 0.5, 0.75]);
    assert_eq!(sc.output_dir(), std::path::PathBuf::from("out/minimal"));
    let g = sc.build_grid().unwrap();
    assert_eq!((g.nx, g.nz), (16, 17));
}

#[test]
fn constraint_violation_names_line() {
    let text = MINIMAL.replace("nz = 17", "nz = 4");
    let e = Scenario::from_toml(&text).unwrap_err().to_string();
    assert!(e.contains("line 7"), "{e}");
    assert!(e.contains("nz"), "{e}");
    assert!(e.contains(">= 9"), "{e}");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = format!("{MINIMAL}\n[analysis]\nsteady_toll = 1e-3\n");
    let e = Scenario::from_toml(&text).unwrap_err().to_string();
    assert!(e.contains("steady_toll"), "{e}");
    assert!(e.contains("line"), "{e}");
    assert!(Scenario::from_toml("name = \"x\"").is_err());
}

#[test]
fn bundled_scenarios_parse() {
    for name in BUNDLED {
        let sc = bundled(name).unwrap();
        assert_eq!(sc.name, name);
        sc.validate().unwrap();
    }
    assert!(bundled("nope").is_err());
    assert!(bundled_text("nope").is_none());
}

#[test]
fn content_hash_matches_blob_convention() {
    // SHA-256 of "blob 0\0"
    assert_eq!(
        content_hash(b""),
        "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
    );
    assert_ne!(content_hash(b"a"), content_hash(b"b"));
}

#[test]
fn execution_writes_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = MINIMAL.to_string();
    text.push_str("\n[diagnostics]\nsnapshot_every = 1.0\n");
    let sc = Scenario::from_toml(&text).unwrap();
    let ex = execute(&sc, &text, dir.path()).unwrap();
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&ex.manifest).unwrap()).unwrap();
    assert_eq!(m.name, "minimal");
    assert_eq!(m.config_hash, content_hash(text.as_bytes()));
    let paths: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for want in ["timeseries.csv", "rearrangement.csv", "report.json", "scenario.toml"] {
        assert!(paths.contains(&want), "{want} missing from {paths:?}");
    }
    assert!(paths.iter().any(|p| p.starts_with("snapshots/")), "{paths:?}");
    for f in &m.files {
        let bytes = std::fs::read(dir.path().join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(content_hash(&bytes), f.sha256);
    }
}

#[test]
fn timeseries_is_deterministic() {
    let sc = Scenario::from_toml(MINIMAL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    execute(&sc, MINIMAL, a.path()).unwrap();
    execute(&sc, MINIMAL, b.path()).unwrap();
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("timeseries.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let csv = String::from_utf8(read(&a)).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert!(header[0].starts_with("time"));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn stratified_scenario_passes_its_checks() {
    let dir = tempfile::tempdir().unwrap();
    let text = bundled_text("stratified").unwrap();
    let sc = Scenario::from_toml(text).unwrap();
    let ex = execute(&sc, text, dir.path()).unwrap();
    assert!(ex.report.all_passed(), "{}", ex.report.to_json());
}
