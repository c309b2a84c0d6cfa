// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! File formats: binary polar scans, CSV streams, the run configuration and
//! the dataset directory layout.
//!
//! Scan files (`.frad`) are little-endian:
//!
//! ```text
//! "FRAD"  u16 version=1  u32 azimuths  u32 range_bins  f64 range_resolution
//! azimuths x { i64 t_ns  f64 azimuth_rad  range_bins x u8 }
//! ```
//!
//! CSV numbers are written in the shortest form that parses back to the same
//! `f64`, so every file round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use thiserror::Error;

use crate::eval::{Pose3Sample, RteReport, Trajectory};
use crate::frontend::{PolarScan, ScanError};
use crate::geometry::{Pose2, UnitQuat};
use crate::imu::{ImuSample, DEFAULT_BETA};
use crate::pipeline::{Params, PipelineOptions, ScanDiagnostics, ScanOutput};
use crate::registration::IcpConfig;
use crate::Nanos;

pub const FRAD_MAGIC: &[u8; 4] = b"FRAD";
pub const FRAD_VERSION: u16 = 1;
const FRAD_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

pub const IMU_HEADER: &str = "t_ns,wx,wy,wz,ax,ay,az";
pub const GT_HEADER: &str = "t_ns,x,y,z,qw,qx,qy,qz";
pub const TRAJECTORY_HEADER: &str = "t_ns,x,y,yaw,roll,pitch";
pub const RTE_HEADER: &str = "kind,start_t_ns,length_m,err_pct,rot_err_deg_per_100m";
pub const DIAGNOSTICS_HEADER: &str = "scan_index,t_ns,hit,reason,submap_id,raw,deskewed,filtered,source,reference,\
tilt_deg,gate_active,gate_fallback,icp_iterations,icp_cost,matched_fraction,x,y,yaw,vx,vy,atlas_update,atlas_size";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported format version {version} at byte {offset}")]
    UnsupportedVersion { version: u16, offset: usize },
    #[error("file truncated at byte {offset}")]
    TruncatedFile { offset: usize },
    #[error("invalid scan: {0}")]
    InvalidScan(#[from] ScanError),
    #[error("line {line}: expected header `{expected}`")]
    BadHeader { line: usize, expected: &'static str },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: timestamp not strictly increasing")]
    NonMonotonicTimestamp { line: usize },
    #[error("line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("dataset: {0}")]
    Dataset(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn encode_polar_scan(scan: &PolarScan) -> Vec<u8> {
    let na = scan.azimuth_count();
    let nr = scan.range_bin_count();
    let mut out = Vec::with_capacity(FRAD_HEADER_LEN + na * (16 + nr));
    out.extend_from_slice(FRAD_MAGIC);
    out.extend_from_slice(&FRAD_VERSION.to_le_bytes());
    out.extend_from_slice(&(na as u32).to_le_bytes());
    out.extend_from_slice(&(nr as u32).to_le_bytes());
    out.extend_from_slice(&scan.range_resolution().to_le_bytes());
    for a in 0..na {
        out.extend_from_slice(&scan.timestamps()[a].to_le_bytes());
        out.extend_from_slice(&scan.azimuths()[a].to_le_bytes());
        out.extend_from_slice(scan.row(a));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(IoError::TruncatedFile { offset: self.bytes.len() });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode_polar_scan(bytes: &[u8]) -> Result<PolarScan, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 {
        return Err(IoError::TruncatedFile { offset: bytes.len() });
    }
    if r.take(4)? != FRAD_MAGIC {
        return Err(IoError::BadMagic { offset: 0 });
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != FRAD_VERSION {
        return Err(IoError::UnsupportedVersion { version, offset: 4 });
    }
    let na = u32::from_le_bytes(r.array()?) as usize;
    let nr = u32::from_le_bytes(r.array()?) as usize;
    let res = f64::from_le_bytes(r.array()?);
    let record = 16 + nr;
    let needed = na.checked_mul(record).and_then(|b| b.checked_add(FRAD_HEADER_LEN));
    if needed.is_none_or(|n| bytes.len() < n) {
        let complete = (bytes.len() - FRAD_HEADER_LEN) / record.max(1);
        return Err(IoError::TruncatedFile { offset: FRAD_HEADER_LEN + complete * record });
    }
    let mut azimuths = Vec::with_capacity(na);
    let mut stamps = Vec::with_capacity(na);
    let mut intensity = Vec::with_capacity(na * nr);
    for _ in 0..na {
        stamps.push(i64::from_le_bytes(r.array()?));
        azimuths.push(f64::from_le_bytes(r.array()?));
        intensity.extend_from_slice(r.take(nr)?);
    }
    if r.pos != bytes.len() {
        return Err(IoError::Dataset(format!("{} trailing bytes after the last record", bytes.len() - r.pos)));
    }
    Ok(PolarScan::new(res, nr, azimuths, stamps, intensity)?)
}

pub fn write_polar_scan(scan: &PolarScan, path: &Path) -> Result<(), IoError> {
    fs::write(path, encode_polar_scan(scan)).map_err(io_err(path))
}

pub fn read_polar_scan(path: &Path) -> Result<PolarScan, IoError> {
    decode_polar_scan(&fs::read(path).map_err(io_err(path))?)
}

/// Data rows of a CSV with the given header, as `(line number, fields)`.
fn csv_rows(text: &str, header: &'static str, width: usize) -> Result<Vec<(usize, csv::StringRecord)>, IoError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let ok = reader.headers().is_ok_and(|h| h.iter().eq(header.split(',')));
    if !ok {
        return Err(IoError::BadHeader { line: 1, expected: header });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(IoError::MalformedRow {
                line,
                reason: format!("expected {width} fields, got {}", record.len()),
            });
        }
        rows.push((line, record));
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str) -> Result<T, IoError> {
    field.parse().map_err(|_| IoError::MalformedRow { line, reason: format!("cannot parse `{field}`") })
}

/// Parses fields `1..=N` as finite floats.
fn parse_floats<const N: usize>(line: usize, record: &csv::StringRecord) -> Result<[f64; N], IoError> {
    let mut out = [0.0f64; N];
    for (i, o) in out.iter_mut().enumerate() {
        let f = &record[i + 1];
        *o = parse_field(line, f)?;
        if !o.is_finite() {
            return Err(IoError::MalformedRow { line, reason: format!("non-finite value `{f}`") });
        }
    }
    Ok(out)
}

fn check_monotonic(last: &mut Option<Nanos>, t: Nanos, line: usize) -> Result<(), IoError> {
    if last.is_some_and(|l| t <= l) {
        return Err(IoError::NonMonotonicTimestamp { line });
    }
    *last = Some(t);
    Ok(())
}

pub fn parse_imu_csv(text: &str) -> Result<Vec<ImuSample>, IoError> {
    let mut last = None;
    csv_rows(text, IMU_HEADER, 7)?
        .into_iter()
        .map(|(line, f)| {
            let t: Nanos = parse_field(line, &f[0])?;
            check_monotonic(&mut last, t, line)?;
            let v: [f64; 6] = parse_floats(line, &f)?;
            Ok(ImuSample::new(t, Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])))
        })
        .collect()
}

pub fn format_imu_csv(samples: &[ImuSample]) -> String {
    let mut out = format!("{IMU_HEADER}\n");
    for s in samples {
        let (w, a) = (s.omega, s.accel);
        let _ = writeln!(out, "{},{},{},{},{},{},{}", s.t, w.x, w.y, w.z, a.x, a.y, a.z);
    }
    out
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    parse_imu_csv(&read_text(path)?)
}

pub fn write_imu_csv(samples: &[ImuSample], path: &Path) -> Result<(), IoError> {
    write_text(path, &format_imu_csv(samples))
}

pub fn parse_gt_csv(text: &str) -> Result<Vec<Pose3Sample>, IoError> {
    let mut last = None;
    csv_rows(text, GT_HEADER, 8)?
        .into_iter()
        .map(|(line, f)| {
            let t: Nanos = parse_field(line, &f[0])?;
            check_monotonic(&mut last, t, line)?;
            let v: [f64; 7] = parse_floats(line, &f)?;
            let norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(IoError::MalformedRow { line, reason: "quaternion is not unit length".into() });
            }
            Ok(Pose3Sample {
                t,
                position: Vector3::new(v[0], v[1], v[2]),
                attitude: UnitQuat::from_wxyz(v[3], v[4], v[5], v[6]),
            })
        })
        .collect()
}

pub fn format_gt_csv(samples: &[Pose3Sample]) -> String {
    let mut out = format!("{GT_HEADER}\n");
    for s in samples {
        let p = s.position;
        let [w, x, y, z] = s.attitude.canonical().to_array();
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", s.t, p.x, p.y, p.z, w, x, y, z);
    }
    out
}

pub fn read_gt_csv(path: &Path) -> Result<Vec<Pose3Sample>, IoError> {
    parse_gt_csv(&read_text(path)?)
}

pub fn write_gt_csv(samples: &[Pose3Sample], path: &Path) -> Result<(), IoError> {
    write_text(path, &format_gt_csv(samples))
}

/// One row of odometry output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: Nanos,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
}

impl From<&ScanOutput> for TrajectoryRow {
    fn from(o: &ScanOutput) -> Self {
        Self { t: o.t, x: o.pose.x, y: o.pose.y, yaw: o.pose.yaw(), roll: o.roll, pitch: o.pitch }
    }
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>, IoError> {
    let mut last = None;
    csv_rows(text, TRAJECTORY_HEADER, 6)?
        .into_iter()
        .map(|(line, f)| {
            let t: Nanos = parse_field(line, &f[0])?;
            check_monotonic(&mut last, t, line)?;
            let [x, y, yaw, roll, pitch]: [f64; 5] = parse_floats(line, &f)?;
            Ok(TrajectoryRow { t, x, y, yaw, roll, pitch })
        })
        .collect()
}

pub fn format_trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.t, r.x, r.y, r.yaw, r.roll, r.pitch);
    }
    out
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>, IoError> {
    parse_trajectory_csv(&read_text(path)?)
}

pub fn write_trajectory_csv(rows: &[TrajectoryRow], path: &Path) -> Result<(), IoError> {
    write_text(path, &format_trajectory_csv(rows))
}

/// Planar trajectory from odometry rows.
pub fn rows_to_trajectory(rows: &[TrajectoryRow]) -> Result<Trajectory, IoError> {
    Trajectory::new(rows.iter().map(|r| (r.t, Pose2::new(r.x, r.y, r.yaw))).collect())
        .map_err(|e| IoError::Dataset(e.to_string()))
}

pub fn format_diagnostics_csv(rows: &[ScanOutput]) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for o in rows {
        let d: &ScanDiagnostics = &o.diagnostics;
        let reason = d.miss.as_ref().map_or(String::new(), |m| m.to_string().replace(',', ";"));
        let submap = d.submap_id.map_or(String::new(), |id| id.to_string());
        let update = match d.atlas_update {
            crate::atlas::AtlasUpdate::Merged { id } => format!("merged:{id}"),
            crate::atlas::AtlasUpdate::Created { id } => format!("created:{id}"),
            crate::atlas::AtlasUpdate::Skipped => "skipped".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.scan_index,
            d.t,
            u8::from(d.hit()),
            reason,
            submap,
            d.raw_count,
            d.deskewed_count,
            d.filtered_count,
            d.source_count,
            d.reference_count,
            d.tilt_deg,
            u8::from(d.gate_active),
            u8::from(d.gate_fallback),
            d.icp_iterations,
            d.icp_cost,
            d.matched_fraction,
            o.pose.x,
            o.pose.y,
            o.pose.yaw(),
            d.velocity.x,
            d.velocity.y,
            update,
            d.atlas_size
        );
    }
    out
}

/// Per-segment rows, then summary rows keyed by `kind`.
pub fn format_rte_csv(report: &RteReport, endpoint_m: Option<f64>, extra: &[(&str, f64)]) -> String {
    let mut out = format!("{RTE_HEADER}\n");
    for s in &report.segments {
        let _ = writeln!(out, "segment,{},{},{},{}", s.start_t, s.length_m, s.err_pct, s.rot_err_deg_per_100m);
    }
    let len = report.segment_length;
    let mut summary = |kind: &str, err: f64, rot: f64| {
        let _ = writeln!(out, "{kind},,{len},{err},{rot}");
    };
    summary("median", report.median, f64::NAN);
    summary("mean", report.mean, report.mean_rot_deg_per_100m);
    summary("q1", report.q1, f64::NAN);
    summary("q3", report.q3, f64::NAN);
    summary("count", report.count() as f64, f64::NAN);
    if let Some(e) = endpoint_m {
        let _ = writeln!(out, "endpoint_m,,,{e},");
    }
    for (k, v) in extra {
        let _ = writeln!(out, "{k},,,{v},");
    }
    out.replace(",NaN\n", ",\n")
}

/// Summary value of `kind` from an RTE CSV.
pub fn rte_summary(text: &str, kind: &str) -> Option<f64> {
    text.lines().find_map(|l| {
        let f: Vec<&str> = l.split(',').collect();
        (f.first() == Some(&kind)).then(|| f.get(3)?.parse().ok()).flatten()
    })
}

/// Everything the `run` command needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub params: Params,
    pub icp: IcpConfig,
    pub options: PipelineOptions,
    /// Attitude filter gain.
    pub beta: f64,
    /// Length of the initial rest used for bias estimation, seconds.
    pub static_window: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: Params::default(),
            icp: IcpConfig::default(),
            options: PipelineOptions::default(),
            beta: DEFAULT_BETA,
            static_window: 10.0,
        }
    }
}

impl RunConfig {
    /// Parses flat `key = value` lines; `#` starts a comment. Omitted keys
    /// keep their defaults, unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut c = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(IoError::Config { line, reason: format!("expected `key = value`, got `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(IoError::Config { line, reason: format!("duplicate key `{key}`") });
            }
            c.set(key, value).map_err(|reason| IoError::Config { line, reason })?;
        }
        c.params.validate().map_err(|reason| IoError::Config { line: 0, reason })?;
        if !(c.beta >= 0.0) || !(c.static_window > 0.0) {
            return Err(IoError::Config { line: 0, reason: "beta must be >= 0 and static_window > 0".into() });
        }
        c.icp.k_nn = c.params.k_nn;
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
        }
        let p = &mut self.params;
        match key {
            "k" => p.k = num(key, value)?,
            "r_min" => p.r_min = num(key, value)?,
            "r_max" => p.r_max = num(key, value)?,
            "tau_raw" => p.tau_raw = num(key, value)?,
            "d_voxel" => p.d_voxel = num(key, value)?,
            "theta_tilt" => p.theta_tilt = num(key, value)?,
            "gamma" => p.gamma = num(key, value)?,
            "r_submap" => p.r_submap = num(key, value)?,
            "tau_tilt" => p.tau_tilt = num(key, value)?,
            "k_nn" => p.k_nn = num(key, value)?,
            "max_iterations" => self.icp.max_iterations = num(key, value)?,
            "translation_epsilon" => self.icp.translation_epsilon = num(key, value)?,
            "rotation_epsilon" => self.icp.rotation_epsilon = num(key, value)?,
            "max_correspondence_distance" => self.icp.max_correspondence_distance = num(key, value)?,
            "use_point_weights" => self.icp.use_point_weights = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "static_window" => self.static_window = num(key, value)?,
            "tilt_gate" => self.options.tilt_gate = num(key, value)?,
            "tilt_search" => self.options.tilt_search = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let i = &self.icp;
        let o = &self.options;
        format!(
            "k = {}\nr_min = {}\nr_max = {}\ntau_raw = {}\nd_voxel = {}\ntheta_tilt = {}\ngamma = {}\n\
             r_submap = {}\ntau_tilt = {}\nk_nn = {}\nmax_iterations = {}\ntranslation_epsilon = {}\n\
             rotation_epsilon = {}\nmax_correspondence_distance = {}\nuse_point_weights = {}\nbeta = {}\n\
             static_window = {}\ntilt_gate = {}\ntilt_search = {}\n",
            p.k,
            p.r_min,
            p.r_max,
            p.tau_raw,
            p.d_voxel,
            p.theta_tilt,
            p.gamma,
            p.r_submap,
            p.tau_tilt,
            p.k_nn,
            i.max_iterations,
            i.translation_epsilon,
            i.rotation_epsilon,
            i.max_correspondence_distance,
            i.use_point_weights,
            self.beta,
            self.static_window,
            o.tilt_gate,
            o.tilt_search
        )
    }
}

/// Paths inside a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn scans_dir(&self) -> PathBuf {
        self.root.join("scans")
    }

    pub fn scan_path(&self, index: usize) -> PathBuf {
        self.scans_dir().join(format!("{index:06}.frad"))
    }

    pub fn imu_path(&self) -> PathBuf {
        self.root.join("imu.csv")
    }

    pub fn gt_path(&self) -> PathBuf {
        self.root.join("ground_truth.csv")
    }

    pub fn echo_path(&self) -> PathBuf {
        self.root.join("scenario.echo")
    }

    pub fn create(&self) -> Result<(), IoError> {
        let dir = self.scans_dir();
        fs::create_dir_all(&dir).map_err(io_err(&dir))
    }

    /// Scan files in processing order; they must be numbered contiguously from 0.
    pub fn scan_files(&self) -> Result<Vec<PathBuf>, IoError> {
        let dir = self.scans_dir();
        let mut indices = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            let Some(stem) = name.strip_suffix(".frad") else { continue };
            let index: usize = stem
                .parse()
                .ok()
                .filter(|_| stem.len() == 6)
                .ok_or_else(|| IoError::Dataset(format!("unexpected scan file name `{name}`")))?;
            indices.push(index);
        }
        indices.sort_unstable();
        if let Some((pos, _)) = indices.iter().enumerate().find(|(i, v)| i != *v) {
            return Err(IoError::Dataset(format!("scan {pos:06}.frad is missing")));
        }
        Ok(indices.into_iter().map(|i| self.scan_path(i)).collect())
    }
}
