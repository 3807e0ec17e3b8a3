use std::path::Path;
use std::process::{Command, Output};

use mixpot::grid::GridDomain;
use mixpot::io::{parse_profile_csv, read_grid_function};

const SMALL_SCENE: &str = r#"
[params]
n = 2
s = 0.5
p = 2.0

[scene]
far_field = 0.0
center = [0.0, 0.0]

[scene.grid]
dim = 2
half = 1.0
cells = 16
interior = { kind = "ball", radius = 0.9 }

[scene.exterior]
kind = "affine"
offset = 0.1
slope = [0.5, -0.2]

[scene.measure]
kind = "dirac"
at = [0.0, 0.0]
mass = 1.0
"#;

fn mixpot(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_mixpot"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn hash_of(dir: &Path) -> String {
    let text = std::fs::read_to_string(dir.join("out/config.toml")).unwrap();
    let first = text.lines().next().unwrap();
    first.split('"').nth(1).unwrap().to_string()
}

#[test]
fn dirac_riesz_profile_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_SCENE}\n[potential]\nkind = \"riesz\"\nx0 = [0.1, 0.0]\nradii = [0.05, 0.2, 0.5, 1.0, 3.0]\n");
    let o = mixpot(dir.path(), &cfg, &["potential"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/potential.csv")).unwrap();
    let (radii, values) = parse_profile_csv(&text, Some(&hash_of(dir.path()))).unwrap();
    for (r, v) in radii.iter().zip(&values) {
        let want = if *r <= 0.1 { 0.0 } else { 1.0 / 0.1 - 1.0 / r };
        assert!((v - want).abs() <= 1e-10 * want.max(1.0), "R = {r}: {v} vs {want}");
    }
}

#[test]
fn wolff_profile_of_dirac_is_logarithmic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_SCENE}\n[potential]\nkind = \"wolff\"\nx0 = [0.0, 0.25]\nradii = [0.5, 2.0]\nbeta = 1.0\n");
    let o = mixpot(dir.path(), &cfg, &["potential"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/potential.csv")).unwrap();
    let (radii, values) = parse_profile_csv(&text, None).unwrap();
    for (r, v) in radii.iter().zip(&values) {
        assert!((v - (r / 0.25).ln()).abs() < 1e-10);
    }
}

#[test]
fn empty_experiment_list_exits_cleanly_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixpot(dir.path(), SMALL_SCENE, &["experiment"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn out_of_range_parameters_exit_with_every_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL_SCENE.replace("s = 0.5\np = 2.0", "s = 1.2\np = 1.1");
    let o = mixpot(dir.path(), &cfg, &["solve"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("requires s ∈ (0,1)"), "{err}");
    assert!(err.contains("requires p > 2 − 1/n"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixpot(dir.path(), SMALL_SCENE, &["experiment", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown experiment"));
}

#[test]
fn passing_experiment_writes_hashed_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_SCENE}\n[suite.monotonicity]\npairs = 2000\n");
    let o = mixpot(dir.path(), &cfg, &["experiment", "monotonicity"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("monotonicity: exponent - verdict PASS"), "{out}");
    let hash = hash_of(dir.path());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/monotonicity/report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"], hash.as_str());
    let csv = std::fs::read_to_string(dir.path().join("out/monotonicity/report.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash={hash}")));
}

#[test]
fn failing_verdict_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_SCENE}\n[suite.monotonicity]\npairs = 2000\nmax_spread = 1.0000001\n");
    let o = mixpot(dir.path(), &cfg, &["experiment", "monotonicity"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict FAIL"));
}

#[test]
fn audit_passes_and_trivially_passes_when_empty() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixpot(dir.path(), SMALL_SCENE, &["audit"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = format!(
        "experiments = [\"pointwise\"]\n{SMALL_SCENE}\n[suite.pointwise]\nconfigurations = 1\nprobes = 2\nresolutions = [24]\n"
    );
    let o = mixpot(dir.path(), &cfg, &["audit"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let audit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/audit.json")).unwrap()).unwrap();
    assert!(audit["max_discrepancy"].as_f64().unwrap() < 1e-10);
}

#[test]
fn solve_writes_hashed_solution_and_rejects_foreign_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("dense_check = true\n{SMALL_SCENE}");
    let o = mixpot(dir.path(), &cfg, &["solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("dense check"));
    let grid = GridDomain::centered(2, 1.0, 16).unwrap().with_ball_interior(0.9).unwrap();
    let path = dir.path().join("out/solution.json");
    let hash = hash_of(dir.path());
    assert!(read_grid_function(&path, &grid, Some(&hash)).is_ok());
    assert!(read_grid_function(&path, &grid, Some("0000000000000000")).is_err());
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert!(summary["relative_residual"].as_f64().unwrap() < 1e-8);
    assert!(summary["dense_discrepancy"].as_f64().unwrap() < 1e-12);
}

#[test]
fn corrupted_cache_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cache_arg = cache.to_str().unwrap();
    let o = mixpot(dir.path(), SMALL_SCENE, &["solve", "--cache", cache_arg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let files: Vec<_> = std::fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(!files.is_empty());
    for f in &files {
        let mut bytes = std::fs::read(f).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x55;
        std::fs::write(f, bytes).unwrap();
    }
    let o = mixpot(dir.path(), SMALL_SCENE, &["solve", "--cache", cache_arg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_SCENE}\n[suite.monotonicity]\npairs = 500\n");
    let read = || std::fs::read(dir.path().join("out/monotonicity/report.json")).unwrap();
    assert_eq!(mixpot(dir.path(), &cfg, &["experiment", "monotonicity"]).status.code(), Some(0));
    let first = read();
    assert_eq!(mixpot(dir.path(), &cfg, &["experiment", "monotonicity"]).status.code(), Some(0));
    assert_eq!(first, read());
}

#[test]
fn sola_reports_distances() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixpot(dir.path(), SMALL_SCENE, &["sola"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/sola_distances.csv")).unwrap();
    assert!(csv.lines().count() >= 3);
}
