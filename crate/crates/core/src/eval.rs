// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Trajectory metrics: relative translation error over fixed-length segments
//! and endpoint error.
//!
//! Segments start at every ground-truth sample and end at the first later
//! sample whose ground-truth arc length reaches the segment length. The
//! estimate is resampled at ground-truth timestamps.

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{normalize_angle, Pose2, UnitQuat};
use crate::Nanos;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("trajectory too short: {available:.2} m available, {required:.2} m required")]
    TrajectoryTooShort { available: f64, required: f64 },
    #[error("timestamps not strictly increasing at sample {index}")]
    NonMonotonic { index: usize },
    #[error("segment length must be positive")]
    InvalidSegmentLength,
}

/// A full 3D pose sample, as produced by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3Sample {
    pub t: Nanos,
    pub position: Vector3<f64>,
    pub attitude: UnitQuat,
}

impl Pose3Sample {
    /// Projection to the plane: position `x, y` and heading.
    pub fn planar(&self) -> Pose2 {
        Pose2::new(self.position.x, self.position.y, self.attitude.yaw())
    }
}

/// Planar trajectory with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    samples: Vec<(Nanos, Pose2)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(Nanos, Pose2)>) -> Result<Self, EvalError> {
        if let Some(i) = samples.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(EvalError::NonMonotonic { index: i + 1 });
        }
        Ok(Self { samples })
    }

    pub fn from_3d(samples: &[Pose3Sample]) -> Result<Self, EvalError> {
        Self::new(samples.iter().map(|s| (s.t, s.planar())).collect())
    }

    pub fn samples(&self) -> &[(Nanos, Pose2)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> Option<(Nanos, Nanos)> {
        Some((self.samples.first()?.0, self.samples.last()?.0))
    }

    /// Pose at `t` by linear interpolation of position and shortest-arc
    /// interpolation of yaw; `None` outside the span.
    pub fn interpolate(&self, t: Nanos) -> Option<Pose2> {
        let (t0, t1) = self.span()?;
        if t < t0 || t > t1 {
            return None;
        }
        let i = self.samples.partition_point(|s| s.0 < t);
        let (tb, b) = self.samples[i];
        if tb == t || i == 0 {
            return Some(b);
        }
        let (ta, a) = self.samples[i - 1];
        let u = (t - ta) as f64 / (tb - ta) as f64;
        let yaw = a.yaw() + u * normalize_angle(b.yaw() - a.yaw());
        Some(Pose2::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), yaw))
    }

    /// Total planar path length, meters.
    pub fn arc_length(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].1.distance_to(&w[1].1)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentError {
    pub start_t: Nanos,
    /// Ground-truth arc length of the segment, meters.
    pub length_m: f64,
    /// Translation error as a percentage of the length.
    pub err_pct: f64,
    /// Heading error, degrees per 100 m.
    pub rot_err_deg_per_100m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RteReport {
    pub segment_length: f64,
    pub segments: Vec<SegmentError>,
    pub median: f64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean_rot_deg_per_100m: f64,
}

impl RteReport {
    pub fn count(&self) -> usize {
        self.segments.len()
    }
}

/// Quantile with linear interpolation between order statistics; `sorted`
/// must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn relative_translation_error(
    est: &Trajectory,
    gt: &Trajectory,
    segment_length: f64,
) -> Result<RteReport, EvalError> {
    if !(segment_length > 0.0) {
        return Err(EvalError::InvalidSegmentLength);
    }
    // Ground-truth samples where the estimate is defined.
    let pairs: Vec<(Nanos, Pose2, Pose2)> =
        gt.samples.iter().filter_map(|&(t, g)| est.interpolate(t).map(|e| (t, g, e))).collect();
    let mut arc = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        if i > 0 {
            acc += pairs[i - 1].1.distance_to(&p.1);
        }
        arc.push(acc);
    }
    if acc < segment_length || pairs.is_empty() {
        return Err(EvalError::TrajectoryTooShort { available: acc, required: segment_length });
    }

    let segments: Vec<SegmentError> = (0..pairs.len())
        .into_par_iter()
        .filter_map(|i| {
            let target = arc[i] + segment_length;
            let j = arc.partition_point(|&a| a < target - 1e-9 * target);
            if j >= pairs.len() {
                return None;
            }
            let (t, gi, ei) = pairs[i];
            let (_, gj, ej) = pairs[j];
            let dg = gi.between(&gj);
            let de = ei.between(&ej);
            let length = arc[j] - arc[i];
            let err = (dg.translation() - de.translation()).norm() / length * 100.0;
            let rot = normalize_angle(dg.yaw() - de.yaw()).abs().to_degrees() / length * 100.0;
            Some(SegmentError { start_t: t, length_m: length, err_pct: err, rot_err_deg_per_100m: rot })
        })
        .collect();

    let mut sorted: Vec<f64> = segments.iter().map(|s| s.err_pct).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(RteReport {
        segment_length,
        median: quantile(&sorted, 0.5),
        mean: sorted.iter().sum::<f64>() / n,
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        mean_rot_deg_per_100m: segments.iter().map(|s| s.rot_err_deg_per_100m).sum::<f64>() / n,
        segments,
    })
}

/// Planar distance between the final poses at the last common timestamp,
/// after aligning the estimate to ground truth at the first common timestamp.
pub fn endpoint_error(est: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    let too_short = EvalError::TrajectoryTooShort { available: 0.0, required: 0.0 };
    let ((e0, e1), (g0, g1)) = est.span().zip(gt.span()).ok_or(too_short.clone())?;
    let start = e0.max(g0);
    let end = e1.min(g1);
    if start > end {
        return Err(too_short);
    }
    let align = gt.interpolate(start).unwrap().compose(&est.interpolate(start).unwrap().inverse());
    let e = align.compose(&est.interpolate(end).unwrap());
    let g = gt.interpolate(end).unwrap();
    Ok((e.translation() - g.translation()).norm())
}

/// Largest minus smallest ground-truth height, meters.
pub fn vertical_range(gt: &[Pose3Sample]) -> f64 {
    let (lo, hi) =
        gt.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.position.z), hi.max(s.position.z)));
    if gt.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Mean planar speed implied by consecutive samples, m/s. Handy for sanity
/// checks of simulated data.
pub fn mean_speed(traj: &Trajectory) -> Option<f64> {
    let (t0, t1) = traj.span()?;
    (t1 > t0).then(|| traj.arc_length() / crate::nanos_to_secs(t1 - t0))
}
