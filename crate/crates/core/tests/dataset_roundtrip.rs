// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

use std::fs;

use tiltrio::io::{self, DatasetLayout, RunConfig, TrajectoryRow};
use tiltrio::pipeline::ScanOutput;
use tiltrio::sim::{Scenario, Simulation};

#[test]
fn a_simulated_dataset_reads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sim = Simulation::new(Scenario::tilt_step(7), Some(2.0)).unwrap();
    let layout = DatasetLayout::new(dir.path());
    layout.create().unwrap();
    let scans = sim.render_scans(&sim.scan_start_times());
    for (i, s) in scans.iter().enumerate() {
        io::write_polar_scan(s, &layout.scan_path(i)).unwrap();
    }
    let imu = sim.synthesize_imu();
    io::write_imu_csv(&imu, &layout.imu_path()).unwrap();
    io::write_gt_csv(sim.ground_truth(), &layout.gt_path()).unwrap();

    let files = layout.scan_files().unwrap();
    assert_eq!(files.len(), scans.len());
    for (f, s) in files.iter().zip(&scans) {
        let back = io::read_polar_scan(f).unwrap();
        assert_eq!(&back, s);
        assert_eq!(io::encode_polar_scan(&back), fs::read(f).unwrap());
    }
    assert_eq!(io::read_imu_csv(&layout.imu_path()).unwrap(), imu);
    let gt = io::read_gt_csv(&layout.gt_path()).unwrap();
    assert_eq!(gt.len(), sim.ground_truth().len());
    for (a, b) in gt.iter().zip(sim.ground_truth()) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.position, b.position);
        assert!(a.attitude.angle_to(&b.attitude) < 1e-12);
    }
    // Writing what was read reproduces the file byte for byte.
    assert_eq!(io::format_gt_csv(&gt), fs::read_to_string(layout.gt_path()).unwrap());

    fs::remove_file(layout.scan_path(3)).unwrap();
    assert!(layout.scan_files().is_err());
}

#[test]
fn trajectory_and_config_files_close_under_round_trip() {
    let rows: Vec<TrajectoryRow> = (0..50)
        .map(|i| {
            let f = i as f64;
            TrajectoryRow {
                t: i * 250_000_000,
                x: 0.1 * f,
                y: -1.0 / (f + 3.0),
                yaw: 0.3 * f.sin(),
                roll: 1e-17 * f,
                pitch: -0.02,
            }
        })
        .collect();
    let text = io::format_trajectory_csv(&rows);
    assert_eq!(io::parse_trajectory_csv(&text).unwrap(), rows);

    let mut cfg = RunConfig::default();
    cfg.params.k = 12;
    cfg.icp.max_correspondence_distance = 3.25;
    cfg.options.tilt_search = false;
    cfg.beta = 0.033;
    assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);

    let empty: Vec<ScanOutput> = Vec::new();
    assert_eq!(io::format_diagnostics_csv(&empty).lines().count(), 1);
}
