use std::path::Path;
use std::process::{Command, Output};

use crowdtopo::tessellation::TileMeasure;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdtopo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_measure(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_lists_defaults_and_exits_zero() {
    let o = run(&["experiment", "ensemble", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for flag in ["--configs", "--neighbours", "--delta", "--epsilon", "--seed", "--samples"] {
        assert!(text.contains(flag), "{flag} missing");
    }
    assert!(text.contains("[default: 350]"));
    let o = run(&["simulate", "walk", "--help"]);
    let text = stdout(&o);
    assert!(text.contains("[default: 2.5]") && text.contains("[default: 360]"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn tessellate_random_writes_full_measure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = run(&["tessellate", "--random", "7", "1.0", "42", "--samples", "100000", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m = TileMeasure::load(&out).unwrap();
    assert_eq!(m.n_tiles(), 128);
    assert_eq!(m.sample_count(), 100_000);
    assert!(stdout(&o).contains("{1,2,3,4,5,6,7}"));
}

#[test]
fn few_samples_warn_but_succeed() {
    let o = run(&["tessellate", "--random", "3", "1.0", "1", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn solve_two_neighbour_example() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_measure(dir.path(), "m.json", r#"{"n_neighbours":2,"mass":[0.4,0.2,0.2,0.2],"sample_count":0}"#);
    let report = dir.path().join("r.json");
    let o = run(&["solve", &m, "--fk", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let e: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("expected_steps "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((e - 10.0 / 3.0).abs() < 1e-12);
    assert!(text.contains("second_largest_eigenvalue 0.6"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!((json["expected_steps"].as_f64().unwrap() - 10.0 / 3.0).abs() < 1e-12);
}

#[test]
fn solve_delta_with_empty_state_qualifying() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_measure(dir.path(), "m.json", r#"{"n_neighbours":2,"mass":[0.4,0.2,0.2,0.2],"sample_count":0}"#);
    let o = run(&["solve", &m, "--delta", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("expected_steps 0\n"));
}

#[test]
fn malformed_measure_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_measure(dir.path(), "m.json", r#"{"n_neighbours":1,"mass":[0.2,0.3],"sample_count":0}"#);
    assert_eq!(run(&["solve", &m, "--fk"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["solve", missing.to_str().unwrap(), "--fk"]).status.code(), Some(2));
    let garbage = write_measure(dir.path(), "g.json", "not json");
    assert_eq!(run(&["solve", &garbage, "--fk"]).status.code(), Some(2));
}

#[test]
fn degenerate_scenario_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.txt");
    std::fs::write(&map, "ncols 2 nrows 1 cellsize 1 origin 0 0 nstations 2\nstation a\n-90 -90\nstation b\n-50 -50\n").unwrap();
    let o = run(&["tessellate", map.to_str().unwrap(), "--threshold", "-60", "--samples", "1000"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unreachable_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_measure(dir.path(), "m.json", r#"{"n_neighbours":2,"mass":[0.5,0.5,0.0,0.0],"sample_count":0}"#);
    let o = run(&["solve", &m, "--fk"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("expected_steps unreachable"));
}

#[test]
fn teleport_simulation_reports_mean() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_measure(dir.path(), "m.json", r#"{"n_neighbours":2,"mass":[0.4,0.2,0.2,0.2],"sample_count":0}"#);
    let csv = dir.path().join("t.csv");
    let o = run(&["simulate", "teleport", "--measure", &m, "--fk", "--trajectories", "20000", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().find_map(|l| l.strip_prefix("mean_reports ")).unwrap();
    let mut parts = line.split(" ± ");
    let mean: f64 = parts.next().unwrap().parse().unwrap();
    let se: f64 = parts.next().unwrap().parse().unwrap();
    assert!((mean - 10.0 / 3.0).abs() < 4.0 * se);
    let rows = std::fs::read_to_string(csv).unwrap();
    assert_eq!(rows.lines().count(), 20_001);
    assert!(rows.starts_with("seed,reports_used,wall_time,terminal_state,status\n"));
}

#[test]
fn ensemble_writes_named_files_and_summary_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["experiment", "ensemble", "--configs", "15", "--samples", "20000", "--seed", "3", "--out", d]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ensemble-seed3.csv")).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ensemble-seed3.summary.json")).unwrap()).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(2).and_then(|v| v.parse().ok()))
        .collect();
    let again = crowdtopo::experiments::Summary::from_values(&values).unwrap();
    assert_eq!(summary["expected_steps"]["p95"].as_f64().unwrap(), again.p95);
    assert_eq!(summary["expected_steps"]["mean"].as_f64().unwrap(), again.mean);
    assert_eq!(summary["expected_steps"]["count"].as_u64().unwrap() as usize, values.len());
}

#[test]
fn threshold_sweep_on_user_map() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.txt");
    crowdtopo::experiments::synthetic_power_map().save(&map).unwrap();
    let o = run(&[
        "experiment",
        "threshold-sweep",
        "--map",
        map.to_str().unwrap(),
        "--thresholds",
        "-70,-90",
        "--samples",
        "20000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("threshold-sweep-seed7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("-70,"));
}
