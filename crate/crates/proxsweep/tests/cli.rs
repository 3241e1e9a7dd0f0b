//! End-to-end exercises of the `proxsweep` binary: exit codes, artifact
//! formats, reproducibility, and sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxsweep"))
}

fn run_scenario(path: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--scenario")
        .arg(path)
        .arg("--out-dir")
        .arg(out_dir)
        .arg("--quiet")
        .args(extra)
        .output()
        .expect("binary runs")
}

const BOX_ENERGY_COARSE: &str = r#"
x0 = [2.0]
T = 10.0
h = 1e-2

[set]
kind = "box"
lower = [1.0]
upper = [2.0]

[field]
kind = "quadratic_descent"
matrix = [[1.0]]

[[checks]]
name = "energy_identity"
slack = 0.0

[constants]
c_energy = 0.0
"#;

#[test]
fn passing_scenario_exits_zero_and_writes_both_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&scenarios_dir().join("halfspace_absorption.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x_0,v_0,active_set_size");
    assert_eq!(csv.lines().count(), 2002, "header plus one row per node");
    let last = csv.lines().last().unwrap();
    assert!(last.ends_with(",1"), "absorbed endpoint has one active constraint: {last}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["overall_pass"], serde_json::Value::Bool(true));
    assert_eq!(report["scenario_digest"].as_str().unwrap().len(), 64);
    assert_eq!(report["checks"].as_array().unwrap().len(), 7);
}

#[test]
fn missing_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(Path::new("/definitely/not/here.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn infeasible_start_exits_one_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    let text = fs::read_to_string(scenarios_dir().join("halfspace_absorption.toml"))
        .unwrap()
        .replace("x0 = [1.0]", "x0 = [-1.0]");
    fs::write(&bad, text).unwrap();
    let out = run_scenario(&bad, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x0 is not in C"));
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    let text = fs::read_to_string(scenarios_dir().join("halfspace_absorption.toml"))
        .unwrap()
        .replace("seed = 42", "seed = 42\nstride = 3");
    fs::write(&bad, text).unwrap();
    let out = run_scenario(&bad, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stride"));
}

#[test]
fn zero_allowance_on_coarse_grid_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("coarse.toml");
    fs::write(&file, BOX_ENERGY_COARSE).unwrap();
    let out = run_scenario(&file, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["overall_pass"], serde_json::Value::Bool(false));
    let energy = &report["checks"][0];
    assert_eq!(energy["name"], "energy_identity");
    assert_eq!(energy["pass"], serde_json::Value::Bool(false));
    assert!(energy["measured"].as_f64().unwrap() > 1e-2, "O(h) residual at h = 1e-2");
}

#[test]
fn identical_file_and_seed_reproduce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("union_flow.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_scenario(&scenario, &a, &[]).status.code(), Some(0));
    assert_eq!(run_scenario(&scenario, &b, &[]).status.code(), Some(0));
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    // A different seed changes the sampled comparisons but not the verdict.
    let c = tmp.path().join("c");
    assert_eq!(run_scenario(&scenario, &c, &["--seed", "7"]).status.code(), Some(0));
    assert_ne!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory.csv")).unwrap());
}

#[test]
fn checks_flag_selects_a_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("linear_decay.toml");
    let out = run_scenario(&scenario, tmp.path(), &["--checks", "velocity_field_bound,velocity_decay"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, vec!["velocity_field_bound", "velocity_decay"]);
}

#[test]
fn sweep_over_one_value_matches_a_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("box_gradient.toml");
    let run_dir = tmp.path().join("run");
    assert_eq!(run_scenario(&scenario, &run_dir, &[]).status.code(), Some(0));
    let sweep_dir = tmp.path().join("sweep");
    let out = bin()
        .args(["sweep", "--parameter", "h", "--values", "1e-3", "--quiet"])
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out-dir")
        .arg(&sweep_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let variant = sweep_dir.join("h_1e-3");
    assert_eq!(
        fs::read(run_dir.join("trajectory.csv")).unwrap(),
        fs::read(variant.join("trajectory.csv")).unwrap()
    );
    assert_eq!(
        fs::read(run_dir.join("report.json")).unwrap(),
        fs::read(variant.join("report.json")).unwrap()
    );
}

#[test]
fn step_sweep_shows_first_order_energy_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sweep",
            "--parameter",
            "h",
            "--values",
            "1e-2,5e-3,2.5e-3",
            "--checks",
            "energy_identity",
            "--quiet",
        ])
        .arg("--scenario")
        .arg(scenarios_dir().join("box_gradient.toml"))
        .arg("--out-dir")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(tmp.path().join("sweep_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "value,overall_pass,max_residual");
    let rows: Vec<(f64, bool)> = lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[2].parse().unwrap(), cols[1] == "true")
        })
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|(_, pass)| *pass));
    let r1 = rows[0].0 / rows[1].0;
    let r2 = rows[1].0 / rows[2].0;
    assert!((1.6..=2.4).contains(&r1), "halving h halves the residual: {r1}");
    assert!((1.6..=2.4).contains(&r2), "halving h halves the residual: {r2}");
}

#[test]
fn start_sweep_keeps_each_trajectory_in_its_member() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--parameter", "x0[0]", "--values", "0.5,2.5", "--quiet"])
        .arg("--scenario")
        .arg(scenarios_dir().join("union_flow.toml"))
        .arg("--out-dir")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for (value, lo, hi) in [("0.5", 0.0, 1.0), ("2.5", 2.0, 3.0)] {
        let csv =
            fs::read_to_string(tmp.path().join(format!("x0_0_{value}")).join("trajectory.csv"))
                .unwrap();
        for line in csv.lines().skip(1) {
            let x: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(
                (lo - 1e-9..=hi + 1e-9).contains(&x),
                "x0[0] = {value}: state {x} left [{lo}, {hi}]"
            );
        }
    }
}

#[test]
fn sweep_records_failed_variants_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    // T = 0.5 stops before the boundary clamp at t = ln 2: the gradient
    // flow is unconverged and the dissipation check errors for that
    // variant while the long-horizon variant passes.
    let out = bin()
        .args(["sweep", "--parameter", "T", "--values", "0.5,10.0", "--checks", "dissipation", "--quiet"])
        .arg("--scenario")
        .arg(scenarios_dir().join("box_gradient.toml"))
        .arg("--out-dir")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let summary = fs::read_to_string(tmp.path().join("sweep_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.5,false,"), "unconverged variant recorded: {}", rows[0]);
    assert!(rows[1].starts_with("10.0,true,"), "healthy variant still ran: {}", rows[1]);
}
