// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Radar-inertial odometry for rotating FMCW radars on vehicles whose roll and
//! pitch change quickly.
//!
//! Per radar scan the pipeline:
//!
//! 1. looks up the IMU attitude at the start of the scan ([`imu`]),
//! 2. searches past submaps for one that is both close and similarly tilted
//!    ([`atlas`]),
//! 3. extracts the k strongest returns per azimuth and deskews them with the
//!    attitude track ([`frontend`]),
//! 4. drops points whose height would shift too much under the relative tilt
//!    between scan and submap ([`tilt_gate`]),
//! 5. registers the survivors against the submap with planar point-to-point
//!    ICP ([`registration`]), and
//! 6. merges the scan into the submap or starts a new one ([`atlas`]).
//!
//! [`sim`] generates deterministic synthetic datasets and [`eval`] scores
//! trajectories with relative translation error over fixed-length segments.
//! File formats and configuration live in [`io`].

// Negated comparisons reject NaN parameters along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod eval;
pub mod frontend;
pub mod geometry;
pub mod imu;
pub mod io;
pub mod pipeline;
pub mod registration;
pub mod sim;
pub mod tilt_gate;

pub use atlas::{Atlas, Submap};
pub use frontend::{PointCloud, PolarScan, RadarPoint, Stage};
pub use geometry::{Pose2, RelativeTilt, UnitQuat};
pub use imu::{AttitudeTrack, ImuBias, ImuSample};
pub use pipeline::{OdomState, Odometry, Params, PipelineOptions};
pub use registration::{IcpConfig, IcpResult};

/// Standard gravity used for accelerometer referencing, m/s².
pub const GRAVITY: f64 = 9.81;

/// Timestamps are signed nanoseconds on a monotonic clock.
pub type Nanos = i64;

pub(crate) const NANOS_PER_SEC: f64 = 1e9;

pub(crate) fn nanos_to_secs(t: Nanos) -> f64 {
    t as f64 / NANOS_PER_SEC
}

pub(crate) fn secs_to_nanos(s: f64) -> Nanos {
    (s * NANOS_PER_SEC).round() as Nanos
}
