use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glu-ntk"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("sweep-cond"));
}

#[test]
fn invalid_n_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["spectrum", "-n", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_dimension_list_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["sweep-cond", "--d-list", ""]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn spectrum_writes_tables_and_manifest() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["spectrum", "-n", "40", "-d", "10", "-m", "80", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let spec = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = spec.lines();
    assert_eq!(lines.next(), Some("# schema: glu-ntk.spectrum.v1"));
    assert_eq!(lines.next(), Some("index,lambda_plain,lambda_gated"));
    assert_eq!(lines.count(), 40);
    assert!(dir.path().join("summary.csv").exists());

    let m = manifest(dir.path());
    assert_eq!(m["subcommand"], "spectrum");
    let seeds = m["seeds"].as_object().unwrap();
    assert!(seeds.keys().any(|k| k.contains("data")), "{seeds:?}");
    assert_eq!(m["schemas"]["spectrum.csv"], "glu-ntk.spectrum.v1");
}

#[test]
fn single_thread_runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--threads", "1", "sweep-cond", "--d-list", "8,12", "--seeds", "2", "--seed", "9"];
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    let ra = fs::read(a.path().join("sweep.csv")).unwrap();
    let rb = fs::read(b.path().join("sweep.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn crossing_with_zero_steps_has_one_point() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["crossing", "-n", "20", "-d", "6", "-m", "64", "--steps", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 3);
    let cross = fs::read_to_string(dir.path().join("crossings.csv")).unwrap();
    let header: Vec<&str> = cross.lines().nth(1).unwrap().split(',').collect();
    let row: Vec<&str> = cross.lines().nth(2).unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == "crossing_index").unwrap();
    assert_eq!(row[idx], "");
}

#[test]
fn gap_control_runs_and_reports_a_p_value() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &[
            "gap", "-n", "30", "-d", "6", "--widths", "16,32", "--etas", "0.05", "--steps", "40",
            "--snapshot-every", "10", "--seeds", "2", "--arch-a", "plain", "--arch-b", "plain",
            "--num-perms", "199",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gap_test.json")).unwrap()).unwrap();
    let p = t["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn degenerate_gap_grid_fails() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &["gap", "-n", "20", "-d", "4", "--widths", "8", "--etas", "0.05", "--steps", "5", "--seeds", "1"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
