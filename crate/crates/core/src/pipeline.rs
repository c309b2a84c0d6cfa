// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Per-scan orchestration.
//!
//! ```text
//! attitude lookup -> predict -> submap search -> extract -> deskew
//!     -> tilt gate -> level + downsample -> ICP -> state update -> atlas update
//! ```
//!
//! Component failures never abort a run. Any of them turns the scan into a
//! miss: the pose is dead-reckoned with zero velocity and IMU yaw, the
//! velocity is reset, and the scan seeds a new submap.

use nalgebra::Vector2;

use crate::atlas::{level_points, on_miss_velocity_reset, Atlas, AtlasUpdate};
use crate::frontend::{deskew, k_strongest, ExtractionParams, PointCloud, PolarScan, Stage};
use crate::geometry::{normalize_angle, Pose2, RelativeTilt, UnitQuat};
use crate::imu::{AttitudeTrack, ImuError};
use crate::registration::{icp_with_index, voxel_downsample, IcpConfig};
use crate::tilt_gate::{tilt_filter, TiltGateError, TiltGateParams};
use crate::{nanos_to_secs, Nanos};

/// Speeds above this are implausible for a ground vehicle and mark the
/// registration as diverged, m/s.
pub const MAX_PLAUSIBLE_SPEED: f64 = 20.0;

/// Pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Strongest returns kept per azimuth.
    pub k: usize,
    /// Minimum range, meters.
    pub r_min: f64,
    /// Maximum range, meters.
    pub r_max: f64,
    /// Raw intensity threshold.
    pub tau_raw: u8,
    /// Voxel size, meters.
    pub d_voxel: f64,
    /// Tilt threshold for submap search and gate activation, degrees.
    pub theta_tilt: f64,
    /// Cauchy scale, meters.
    pub gamma: f64,
    /// Submap search and update distance, meters.
    pub r_submap: f64,
    /// Tilt weight threshold.
    pub tau_tilt: f64,
    /// Neighbors per source point in ICP.
    pub k_nn: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            k: 10,
            r_min: 5.0,
            r_max: 100.0,
            tau_raw: 60,
            d_voxel: 1.0,
            theta_tilt: 3.0,
            gamma: 3.5,
            r_submap: 20.0,
            tau_tilt: 0.8,
            k_nn: 4,
        }
    }
}

impl Params {
    pub fn extraction(&self) -> ExtractionParams {
        ExtractionParams { k: self.k, r_min: self.r_min, r_max: self.r_max, tau_raw: self.tau_raw }
    }

    pub fn gate(&self) -> TiltGateParams {
        TiltGateParams { gamma: self.gamma, tau_tilt: self.tau_tilt, theta_tilt_deg: self.theta_tilt }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.k_nn == 0 {
            return Err("k and k_nn must be positive".into());
        }
        if !(self.r_min >= 0.0 && self.r_max > self.r_min) {
            return Err("need 0 <= r_min < r_max".into());
        }
        if !(self.d_voxel > 0.0 && self.r_submap > 0.0) {
            return Err("d_voxel and r_submap must be positive".into());
        }
        self.gate().validate().map_err(|e| e.to_string())
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    /// Apply the tilt gate; when off every deskewed point passes with weight 1.
    pub tilt_gate: bool,
    /// Require tilt compatibility in the submap search; when off only distance counts.
    pub tilt_search: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { tilt_gate: true, tilt_search: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomState {
    pub pose: Pose2,
    /// World-frame planar velocity, m/s.
    pub velocity: Vector2<f64>,
    pub yaw_rate: f64,
    pub attitude: UnitQuat,
    pub t: Nanos,
}

impl OdomState {
    /// At rest at the world origin.
    pub fn initial(attitude: UnitQuat, t: Nanos) -> Self {
        Self { pose: Pose2::identity(), velocity: Vector2::zeros(), yaw_rate: 0.0, attitude, t }
    }
}

/// Constant-velocity position with IMU-derived heading change.
pub fn predict(state: &OdomState, t_next: Nanos, track: &AttitudeTrack) -> Result<Pose2, ImuError> {
    let q0 = track.attitude_at(state.t)?;
    let q1 = track.attitude_at(t_next)?;
    let dt = nanos_to_secs(t_next - state.t);
    let dyaw = normalize_angle(q1.yaw() - q0.yaw());
    Ok(Pose2::new(state.pose.x + state.velocity.x * dt, state.pose.y + state.velocity.y * dt, state.pose.yaw() + dyaw))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MissReason {
    ColdStart,
    EmptyScan,
    NoSubmap,
    Attitude(String),
    Registration(String),
    Divergence,
}

impl std::fmt::Display for MissReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MissReason::ColdStart => f.write_str("cold_start"),
            MissReason::EmptyScan => f.write_str("empty_scan"),
            MissReason::NoSubmap => f.write_str("no_submap"),
            MissReason::Attitude(e) => write!(f, "attitude: {e}"),
            MissReason::Registration(e) => write!(f, "registration: {e}"),
            MissReason::Divergence => f.write_str("divergence"),
        }
    }
}

/// What happened to one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanDiagnostics {
    pub scan_index: usize,
    pub t: Nanos,
    pub miss: Option<MissReason>,
    pub submap_id: Option<u32>,
    pub raw_count: usize,
    pub deskewed_count: usize,
    pub filtered_count: usize,
    pub source_count: usize,
    pub reference_count: usize,
    /// Relative tilt against the matched submap, degrees.
    pub tilt_deg: f64,
    pub gate_active: bool,
    /// The gate rejected everything and the unfiltered cloud was used.
    pub gate_fallback: bool,
    pub icp_iterations: usize,
    pub icp_cost: f64,
    pub matched_fraction: f64,
    pub velocity: Vector2<f64>,
    pub atlas_update: AtlasUpdate,
    pub atlas_size: usize,
}

impl ScanDiagnostics {
    pub fn hit(&self) -> bool {
        self.miss.is_none()
    }
}

/// Published estimate for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    /// Earliest azimuth timestamp of the scan.
    pub t: Nanos,
    pub pose: Pose2,
    pub roll: f64,
    pub pitch: f64,
    pub diagnostics: ScanDiagnostics,
}

/// The odometry estimator: state plus submap atlas.
#[derive(Debug, Clone)]
pub struct Odometry {
    params: Params,
    icp: IcpConfig,
    options: PipelineOptions,
    state: Option<OdomState>,
    atlas: Atlas,
    scans: usize,
}

impl Odometry {
    /// # Panics
    /// If `params` is invalid.
    pub fn new(params: Params, icp: IcpConfig, options: PipelineOptions) -> Self {
        if let Err(e) = params.validate() {
            panic!("invalid parameters: {e}");
        }
        let icp = IcpConfig { k_nn: params.k_nn, ..icp };
        Self {
            params,
            icp,
            options,
            state: None,
            atlas: Atlas::new(params.r_submap, params.theta_tilt, params.d_voxel),
            scans: 0,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn state(&self) -> Option<&OdomState> {
        self.state.as_ref()
    }

    pub fn atlas(&self) -> &Atlas {
        &self.atlas
    }

    pub fn scans_processed(&self) -> usize {
        self.scans
    }

    pub fn process_scan(&mut self, scan: &PolarScan, track: &AttitudeTrack) -> ScanOutput {
        let index = self.scans;
        self.scans += 1;
        let t = scan.start_time();
        let mut miss: Option<MissReason> = None;

        let q_now = match track.attitude_at(t) {
            Ok(q) => q,
            Err(e) => {
                log::warn!("scan {index}: {e}");
                miss = Some(MissReason::Attitude(e.to_string()));
                self.state.map_or(UnitQuat::identity(), |s| s.attitude)
            }
        };
        let cold = self.state.is_none();
        let prev = self.state.unwrap_or_else(|| OdomState::initial(q_now, t));
        if cold {
            miss = Some(MissReason::ColdStart);
        }

        let predicted = if cold || miss.is_some() {
            prev.pose
        } else {
            match predict(&prev, t, track) {
                Ok(p) => p,
                Err(e) => {
                    miss = Some(MissReason::Attitude(e.to_string()));
                    prev.pose
                }
            }
        };

        let raw = k_strongest(scan, &self.params.extraction());
        let deskewed = if raw.is_empty() {
            miss.get_or_insert(MissReason::EmptyScan);
            raw.clone().advance(Stage::Deskewed)
        } else {
            deskew(&raw, track).unwrap_or_else(|e| {
                miss.get_or_insert(MissReason::Attitude(e.to_string()));
                raw.clone().advance(Stage::Deskewed)
            })
        };

        let mut diag = ScanDiagnostics {
            scan_index: index,
            t,
            miss: None,
            submap_id: None,
            raw_count: raw.len(),
            deskewed_count: deskewed.len(),
            filtered_count: 0,
            source_count: 0,
            reference_count: 0,
            tilt_deg: 0.0,
            gate_active: false,
            gate_fallback: false,
            icp_iterations: 0,
            icp_cost: 0.0,
            matched_fraction: 0.0,
            velocity: Vector2::zeros(),
            atlas_update: AtlasUpdate::Skipped,
            atlas_size: self.atlas.len(),
        };

        let mut corrected = None;
        if miss.is_none() {
            match self.atlas.find_submap(&predicted, &q_now, self.options.tilt_search) {
                None => miss = Some(MissReason::NoSubmap),
                Some(m) => {
                    diag.submap_id = Some(m.id);
                    diag.tilt_deg = m.tilt.angle().to_degrees();
                    match self.register(&deskewed, &m.tilt, &q_now, m.id, &predicted, &mut diag) {
                        Ok(pose) => corrected = Some(pose),
                        Err(reason) => miss = Some(reason),
                    }
                }
            }
        }

        let dt = nanos_to_secs(t - prev.t);
        let mut next = OdomState { attitude: q_now, t, ..prev };
        let mut hit = false;
        if let Some(pose) = corrected {
            let (velocity, yaw_rate) = if dt > 0.0 {
                (
                    (pose.translation() - prev.pose.translation()) / dt,
                    normalize_angle(pose.yaw() - prev.pose.yaw()) / dt,
                )
            } else {
                (Vector2::zeros(), 0.0)
            };
            if velocity.norm() > MAX_PLAUSIBLE_SPEED {
                log::warn!("scan {index}: implausible speed {:.1} m/s", velocity.norm());
                miss = Some(MissReason::Divergence);
            } else {
                next = OdomState { pose, velocity, yaw_rate, attitude: q_now, t };
                hit = true;
            }
        }
        if !hit {
            // Zero-velocity dead reckoning; yaw keeps the IMU increment.
            next.pose = Pose2::new(prev.pose.x, prev.pose.y, predicted.yaw());
            next = on_miss_velocity_reset(&next);
            if let Some(reason) = miss.as_ref().filter(|_| !cold) {
                log::debug!("scan {index}: miss ({reason})");
            }
        }

        let matched = if hit { diag.submap_id } else { None };
        diag.atlas_update = self.atlas.update(&deskewed, &next.pose, &q_now, matched);
        diag.atlas_size = self.atlas.len();
        diag.velocity = next.velocity;
        diag.miss = miss;
        self.state = Some(next);

        let (roll, pitch, _) = q_now.to_rpy();
        ScanOutput { t, pose: next.pose, roll, pitch, diagnostics: diag }
    }

    fn register(
        &self,
        deskewed: &PointCloud,
        tilt: &RelativeTilt,
        q_now: &UnitQuat,
        submap_id: u32,
        predicted: &Pose2,
        diag: &mut ScanDiagnostics,
    ) -> Result<Pose2, MissReason> {
        let gate = self.params.gate();
        diag.gate_active = self.options.tilt_gate && gate.engages(tilt);
        let filtered = if self.options.tilt_gate {
            match tilt_filter(deskewed, tilt, &gate) {
                Ok(c) => c,
                Err(TiltGateError::AllPointsRejected { .. }) => {
                    diag.gate_fallback = true;
                    deskewed.clone().advance(Stage::Filtered)
                }
                Err(e) => return Err(MissReason::Registration(e.to_string())),
            }
        } else {
            deskewed.clone().advance(Stage::Filtered)
        };
        diag.filtered_count = filtered.len();

        let levelled = PointCloud::new(Stage::Filtered, level_points(&filtered.points, q_now), filtered.t_ref);
        let source = voxel_downsample(&levelled, self.params.d_voxel);
        diag.source_count = source.len();

        let submap = self.atlas.get(submap_id).expect("matched submap exists");
        diag.reference_count = submap.cloud().len();
        let r = icp_with_index(&source, submap.index(), predicted, &self.icp)
            .map_err(|e| MissReason::Registration(e.to_string()))?;
        diag.icp_iterations = r.iterations;
        diag.icp_cost = r.final_cost;
        diag.matched_fraction = r.matched_fraction;
        Ok(r.pose)
    }
}
