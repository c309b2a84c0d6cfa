// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! The `tiltrio` command line: `simulate`, `run` and `eval`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use tiltrio::eval::{endpoint_error, relative_translation_error, vertical_range, Trajectory};
use tiltrio::imu::build_attitude_track;
use tiltrio::io::{self, DatasetLayout, RunConfig, TrajectoryRow};
use tiltrio::sim::{Scenario, Simulation};
use tiltrio::Odometry;

/// Scans rendered per batch before they are written out.
const RENDER_CHUNK: usize = 32;

#[derive(Debug, Parser)]
#[command(name = "tiltrio", version, about = "Tilt-aware radar-inertial odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run odometry over a dataset directory.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Score an estimated trajectory against ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Segment length, meters.
        #[arg(long, default_value_t = 100.0)]
        segment: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Parses `argv` and runs the command; returns the process exit code.
/// Everything except result files goes to stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            eprint!("{}", e.render().ansi());
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate { scenario, out, duration } => simulate(&scenario, &out, duration),
        Command::Run { dataset, config, out, diagnostics } => run(&dataset, &config, &out, diagnostics.as_deref()),
        Command::Eval { est, gt, segment, out } => evaluate(&est, &gt, segment, &out),
    }
}

pub fn simulate(scenario_path: &Path, out: &Path, duration: Option<f64>) -> anyhow::Result<()> {
    let text = io::read_text(scenario_path)?;
    let mut scenario = Scenario::from_toml(&text).with_context(|| format!("{}", scenario_path.display()))?;
    if let Some(d) = duration {
        if !(d > 0.0 && d.is_finite()) {
            bail!("--duration must be positive, got {d}");
        }
        scenario.duration_s = Some(d);
    }
    let sim = Simulation::new(scenario.clone(), None)?;
    let layout = DatasetLayout::new(out);
    layout.create()?;
    let starts = sim.scan_start_times();
    log::info!("rendering {} scans into {}", starts.len(), out.display());
    for (c, chunk) in starts.chunks(RENDER_CHUNK).enumerate() {
        for (i, scan) in sim.render_scans(chunk).iter().enumerate() {
            io::write_polar_scan(scan, &layout.scan_path(c * RENDER_CHUNK + i))?;
        }
    }
    io::write_imu_csv(&sim.synthesize_imu(), &layout.imu_path())?;
    io::write_gt_csv(sim.ground_truth(), &layout.gt_path())?;
    io::write_text(&layout.echo_path(), &scenario.to_toml())?;
    Ok(())
}

pub fn run(dataset: &Path, config: &Path, out: &Path, diagnostics: Option<&Path>) -> anyhow::Result<()> {
    let cfg = RunConfig::parse(&io::read_text(config)?).with_context(|| format!("{}", config.display()))?;
    cfg.params.validate().map_err(anyhow::Error::msg).with_context(|| format!("{}", config.display()))?;
    let layout = DatasetLayout::new(dataset);
    let imu = io::read_imu_csv(&layout.imu_path())?;
    let (track, bias) = build_attitude_track(&imu, cfg.static_window, cfg.beta)?;
    log::info!("imu bias: gyro {:?} accel {:?}", bias.gyro, bias.accel);
    let (imu_start, imu_end) = track.span().context("empty IMU stream")?;

    let mut odo = Odometry::new(cfg.params, cfg.icp, cfg.options);
    let mut outputs = Vec::new();
    for path in layout.scan_files()? {
        let scan = io::read_polar_scan(&path)?;
        let ts = scan.timestamps();
        if ts.first().is_some_and(|&t| t < imu_start) || ts.last().is_some_and(|&t| t > imu_end) {
            bail!("{}: scan timestamps fall outside the IMU stream", path.display());
        }
        outputs.push(odo.process_scan(&scan, &track));
    }
    let misses = outputs.iter().filter(|o| !o.diagnostics.hit()).count();
    log::info!("{} scans, {} misses, {} submaps", outputs.len(), misses, odo.atlas().len());

    let rows: Vec<TrajectoryRow> = outputs.iter().map(TrajectoryRow::from).collect();
    io::write_trajectory_csv(&rows, out)?;
    if let Some(p) = diagnostics {
        io::write_text(p, &io::format_diagnostics_csv(&outputs))?;
    }
    Ok(())
}

pub fn evaluate(est_path: &Path, gt_path: &Path, segment: f64, out: &Path) -> anyhow::Result<()> {
    let est = io::rows_to_trajectory(&io::read_trajectory_csv(est_path)?)?;
    let gt3 = io::read_gt_csv(gt_path)?;
    let gt = Trajectory::from_3d(&gt3)?;
    let report = relative_translation_error(&est, &gt, segment)?;
    let endpoint = endpoint_error(&est, &gt)?;
    let text = io::format_rte_csv(&report, Some(endpoint), &[("gt_vertical_range_m", vertical_range(&gt3))]);
    io::write_text(out, &text)?;
    log::info!("median RTE {:.3}% over {} segments, endpoint {:.2} m", report.median, report.count(), endpoint);
    Ok(())
}
