use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qce_core::GridFunction;
use serde_json::Value;

fn qce(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qce"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("readable")).expect("valid json")
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .expect("readable")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn solve_writes_grid_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["solve", "--example", "square", "--n", "24", "--eps", "0.5", "--width", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let u = GridFunction::load_csv(&dir.path().join("solution.csv")).unwrap();
    assert_eq!(u.grid().n(), 24);
    let text = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(text.starts_with("# dim=2 N=24 h="));
    assert!(text.contains("# epsilon=0.5"));
    assert!(text.contains("# scheme: step: delta = 1/K"));

    let report = json(&dir.path().join("solution_report.json"));
    for key in ["iterations", "delta", "lipschitz_K", "converged", "residual_final", "wall_time_s", "accel_rounds"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["converged"], Value::Bool(true));
    assert_eq!(report["config"]["width"], 2);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["solve", "--example", "pacman", "--n", "20"];
    assert!(qce(&args, a.path()).status.success());
    assert!(qce(&args, b.path()).status.success());
    let read = |d: &Path| fs::read(d.join("solution.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    let strip = |d: &Path| {
        let mut v = json(&d.join("solution_report.json"));
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["solve", "--example", "nope"],
        vec!["solve"],
        vec!["solve", "--example", "square", "--n", "16,32"],
        vec!["solve", "--example", "square", "--eps", "-1"],
        vec!["frobnicate"],
    ] {
        let out = qce(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn non_convergence_exits_with_three_and_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["solve", "--example", "circles", "--n", "24", "--max-iter", "5"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("solution.csv").exists());
    let report = json(&dir.path().join("solution_report.json"));
    assert_eq!(report["converged"], Value::Bool(false));
    assert_eq!(report["iterations"], 5);
}

#[test]
fn eps_sweep_writes_one_grid_per_epsilon_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["eps-sweep", "--example", "double-well", "--n", "41", "--eps", "0.2,0.1,0.05"], dir.path());
    assert!(out.status.success());
    for eps in ["0.2", "0.1", "0.05"] {
        assert!(dir.path().join(format!("u_eps_{eps}.csv")).exists());
    }
    let rows = data_rows(&dir.path().join("summary.csv"));
    assert_eq!(rows[0], "epsilon,iterations,converged,sup_distance_to_qce,max_excess_over_qce");
    assert_eq!(rows.len(), 4);
    let dists: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(dists.windows(2).all(|w| w[1] <= w[0]), "{dists:?}");
}

#[test]
fn accel_table_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["accel-table", "--n", "16,24"], dir.path());
    assert!(out.status.success());
    let rows = data_rows(&dir.path().join("accel_table.csv"));
    assert_eq!(rows[0], "n,iterations_plain,iterations_accelerated,ratio");
    assert!(rows[1].starts_with("16,") && rows[2].starts_with("24,"));
}

#[test]
fn consistency_report_writes_rows_and_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qce"))
        .args(["consistency-report", "--count", "3", "--width", "2", "--n", "17,33", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let rows = data_rows(&dir.path().join("consistency.csv"));
    assert_eq!(rows[0], "width,n,h,dtheta,error,grid_error,floor");
    assert_eq!(rows.len(), 3);
    let slopes = data_rows(&dir.path().join("slopes.csv"));
    let slope: f64 = slopes[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(slope > 0.8, "{slope}");
}

#[test]
fn verify_emits_an_array_of_check_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["verify", "--example", "double-well", "--n", "33", "--trials", "50"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let checks = json(&dir.path().join("checks.json"));
    let checks = checks.as_array().unwrap();
    assert_eq!(checks.len(), 7);
    assert!(checks.iter().all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn compare_first_order_is_close_at_half_h() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["compare-first-order", "--example", "double-well", "--n", "33"], dir.path());
    assert!(out.status.success());
    let summary = json(&dir.path().join("summary.json"));
    assert!(summary["sup_distance_over_h"].as_f64().unwrap() <= 5.0);
    assert!(dir.path().join("first_order.csv").exists());
}

#[test]
fn compare_robust_writes_both_solutions_and_their_difference() {
    let dir = tempfile::tempdir().unwrap();
    let out = qce(&["compare-robust", "--n", "17", "--width", "2", "--eps", "0.1"], dir.path());
    assert!(out.status.success());
    let full = GridFunction::load_csv(&dir.path().join("full.csv")).unwrap();
    let robust = GridFunction::load_csv(&dir.path().join("robust.csv")).unwrap();
    let diff = GridFunction::load_csv(&dir.path().join("difference.csv")).unwrap();
    for i in 0..diff.values().len() {
        assert!((diff.get(i) - (robust.get(i) - full.get(i))).abs() < 1e-12);
    }
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["eps_r"], 0.1);
}

#[test]
fn custom_obstacle_from_a_grid_dump() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qce(&["solve", "--example", "square", "--n", "20", "--eps", "0.5", "--width", "1"], dir.path()).status.success());
    let dump = dir.path().join("solution.csv");
    let obstacle = dir.path().join("obstacle.csv");
    fs::copy(&dump, &obstacle).unwrap();

    let second = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qce"))
        .args(["solve", "--eps", "0.5", "--width", "1", "--obstacle-csv"])
        .arg(&obstacle)
        .arg("--out")
        .arg(second.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // With W = 1 every arm ends on a node, so the first solution is a fixed
    // point of the second problem.
    let u = GridFunction::load_csv(&dump).unwrap();
    let v = GridFunction::load_csv(&second.path().join("solution.csv")).unwrap();
    assert!((0..u.values().len()).all(|i| v.get(i) <= u.get(i) + 1e-6));
    assert!(u.sup_distance(&v) < 1e-4, "{}", u.sup_distance(&v));
}
