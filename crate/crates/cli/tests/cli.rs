// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tiltrio::io::{self, DatasetLayout};
use tiltrio::sim::Scenario;

fn tiltrio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiltrio")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// A 16 s flat-loop dataset: the 10 s rest plus about 18 m of driving.
fn short_dataset(dir: &Path) -> std::path::PathBuf {
    let scenario = dir.join("scenario.toml");
    fs::write(&scenario, Scenario::flat_loop(5).to_toml()).unwrap();
    let out = dir.join("ds");
    let o = tiltrio(&["simulate", "--scenario", &s(&scenario), "--out", &s(&out), "--duration", "16"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn missing_argument_is_a_usage_error() {
    let o = tiltrio(&["run", "--config", "x.cfg", "--out", "t.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--dataset"));

    assert_eq!(tiltrio(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tiltrio(&[]).status.code(), Some(1));
    assert_eq!(tiltrio(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = tiltrio(&["simulate", "--scenario", &s(&missing), "--out", &s(&dir.path().join("ds"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "k = 10\nspeed_of_light = 3\n").unwrap();
    let o =
        tiltrio(&["run", "--dataset", &s(dir.path()), "--config", &s(&cfg), "--out", &s(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed_of_light"));
}

#[test]
fn simulate_run_eval() {
    let dir = tempfile::tempdir().unwrap();
    let ds = short_dataset(dir.path());
    let layout = DatasetLayout::new(&ds);
    let scans = layout.scan_files().unwrap();
    assert_eq!(scans.len(), 64);
    assert!(layout.echo_path().exists());
    let echoed = Scenario::from_toml(&fs::read_to_string(layout.echo_path()).unwrap()).unwrap();
    assert_eq!(echoed.duration_s, Some(16.0));

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# all defaults\n").unwrap();
    let traj = dir.path().join("traj.csv");
    let diag = dir.path().join("diag.csv");
    let o =
        tiltrio(&["run", "--dataset", &s(&ds), "--config", &s(&cfg), "--out", &s(&traj), "--diagnostics", &s(&diag)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let rows = io::read_trajectory_csv(&traj).unwrap();
    assert_eq!(rows.len(), scans.len());
    assert_eq!(fs::read_to_string(&diag).unwrap().lines().count(), scans.len() + 1);

    // Too short for a 100 m segment.
    let gt = layout.gt_path();
    let rte = dir.path().join("rte.csv");
    let o = tiltrio(&["eval", "--est", &s(&traj), "--gt", &s(&gt), "--segment", "100", "--out", &s(&rte)]);
    assert_eq!(o.status.code(), Some(2));
    let o = tiltrio(&["eval", "--est", &s(&traj), "--gt", &s(&gt), "--segment", "10", "--out", &s(&rte)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&rte).unwrap();
    assert!(io::rte_summary(&text, "median").unwrap() >= 0.0);
    assert_eq!(io::rte_summary(&text, "gt_vertical_range_m"), Some(0.0));
}

#[test]
fn eval_of_ground_truth_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let gt_samples = tiltrio::sim::generate_ground_truth(&Scenario::flat_loop(2), 60.0).unwrap();
    let gt = dir.path().join("gt.csv");
    io::write_gt_csv(&gt_samples, &gt).unwrap();
    let rows: Vec<io::TrajectoryRow> = gt_samples
        .iter()
        .step_by(250)
        .map(|g| {
            let p = g.planar();
            let (roll, pitch, _) = g.attitude.to_rpy();
            io::TrajectoryRow { t: g.t, x: p.x, y: p.y, yaw: p.yaw(), roll, pitch }
        })
        .collect();
    let est = dir.path().join("est.csv");
    io::write_trajectory_csv(&rows, &est).unwrap();
    let rte = dir.path().join("rte.csv");
    let o = tiltrio(&["eval", "--est", &s(&est), "--gt", &s(&gt), "--segment", "100", "--out", &s(&rte)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&rte).unwrap();
    assert!(io::rte_summary(&text, "median").unwrap() < 1e-9);
    assert!(io::rte_summary(&text, "endpoint_m").unwrap() < 1e-9);
}
