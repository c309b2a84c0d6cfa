// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Polar scans, k-strongest feature extraction and attitude-only deskewing.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::imu::{AttitudeTrack, ImuError};
use crate::Nanos;

/// Longest admissible azimuth timestamp span of one scan.
pub const MAX_SCAN_SPAN_NS: Nanos = 300_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("scan needs at least one azimuth and one range bin")]
    Empty,
    #[error("intensity grid has {actual} cells, expected {expected}")]
    GridSize { expected: usize, actual: usize },
    #[error("azimuth/timestamp count mismatch: {azimuths} vs {timestamps}")]
    AzimuthCount { azimuths: usize, timestamps: usize },
    #[error("azimuths must be strictly increasing within [0, 2pi)")]
    AzimuthOrder,
    #[error("azimuth timestamps must be non-decreasing")]
    TimestampOrder,
    #[error("scan spans {span_ns} ns, more than one rotation")]
    SpanTooLong { span_ns: Nanos },
    #[error("range resolution must be positive")]
    RangeResolution,
}

/// One revolution of a rotating radar: an `N_a x N_r` grid of 8-bit
/// intensities with per-azimuth bearing and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarScan {
    range_resolution: f64,
    range_bins: usize,
    azimuths: Vec<f64>,
    timestamps: Vec<Nanos>,
    intensity: Vec<u8>,
}

impl PolarScan {
    pub fn new(
        range_resolution: f64,
        range_bins: usize,
        azimuths: Vec<f64>,
        timestamps: Vec<Nanos>,
        intensity: Vec<u8>,
    ) -> Result<Self, ScanError> {
        if azimuths.is_empty() || range_bins == 0 {
            return Err(ScanError::Empty);
        }
        if !(range_resolution > 0.0 && range_resolution.is_finite()) {
            return Err(ScanError::RangeResolution);
        }
        if azimuths.len() != timestamps.len() {
            return Err(ScanError::AzimuthCount { azimuths: azimuths.len(), timestamps: timestamps.len() });
        }
        let expected = azimuths.len() * range_bins;
        if intensity.len() != expected {
            return Err(ScanError::GridSize { expected, actual: intensity.len() });
        }
        let in_range = azimuths.iter().all(|a| (0.0..std::f64::consts::TAU).contains(a));
        if !in_range || azimuths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScanError::AzimuthOrder);
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(ScanError::TimestampOrder);
        }
        let span_ns = timestamps[timestamps.len() - 1] - timestamps[0];
        if span_ns > MAX_SCAN_SPAN_NS {
            return Err(ScanError::SpanTooLong { span_ns });
        }
        Ok(Self { range_resolution, range_bins, azimuths, timestamps, intensity })
    }

    pub fn azimuth_count(&self) -> usize {
        self.azimuths.len()
    }

    pub fn range_bin_count(&self) -> usize {
        self.range_bins
    }

    pub fn range_resolution(&self) -> f64 {
        self.range_resolution
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn timestamps(&self) -> &[Nanos] {
        &self.timestamps
    }

    /// Earliest azimuth timestamp.
    pub fn start_time(&self) -> Nanos {
        self.timestamps[0]
    }

    pub fn row(&self, azimuth: usize) -> &[u8] {
        &self.intensity[azimuth * self.range_bins..(azimuth + 1) * self.range_bins]
    }

    pub fn intensity(&self) -> &[u8] {
        &self.intensity
    }

    /// Center range of a bin.
    pub fn bin_range(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.range_resolution
    }
}

/// A radar return. `z` is zero in the raw sensor frame and free afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub position: Vector3<f64>,
    pub intensity: u8,
    pub t: Nanos,
    /// Tilt-gate weight carried into registration; 1 unless gated.
    pub weight: f64,
}

impl RadarPoint {
    pub fn new(position: Vector3<f64>, intensity: u8, t: Nanos) -> Self {
        Self { position, intensity, t, weight: 1.0 }
    }
}

/// Processing stage of a cloud. Transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Raw,
    Deskewed,
    Filtered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub stage: Stage,
    pub points: Vec<RadarPoint>,
    /// Time of the frame the points are expressed in.
    pub t_ref: Nanos,
}

impl PointCloud {
    pub fn new(stage: Stage, points: Vec<RadarPoint>, t_ref: Nanos) -> Self {
        Self { stage, points, t_ref }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vector3<f64>> + '_ {
        self.points.iter().map(|p| &p.position)
    }

    pub(crate) fn advance(mut self, stage: Stage) -> Self {
        debug_assert!(stage >= self.stage, "stage may not move backwards");
        self.stage = stage;
        self
    }
}

/// Gates for k-strongest extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    pub k: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub tau_raw: u8,
}

/// Sensor-frame Cartesian coordinates of a polar return.
pub fn polar_to_cartesian(range: f64, azimuth: f64) -> (f64, f64) {
    let (s, c) = azimuth.sin_cos();
    (range * c, range * s)
}

/// Indices of the `k` strongest bins of one ray whose center range lies in
/// `[r_min, r_max]` and whose intensity exceeds `tau_raw`, strongest first;
/// equal intensities prefer the nearer bin.
pub fn strongest_bins(row: &[u8], range_resolution: f64, params: &ExtractionParams) -> Vec<usize> {
    let mut candidates: Vec<(u8, usize)> = row
        .iter()
        .enumerate()
        .filter(|&(i, &v)| {
            let r = (i as f64 + 0.5) * range_resolution;
            v > params.tau_raw && r >= params.r_min && r <= params.r_max
        })
        .map(|(i, &v)| (v, i))
        .collect();
    let by_strength = |a: &(u8, usize), b: &(u8, usize)| b.0.cmp(&a.0).then(a.1.cmp(&b.1));
    if candidates.len() > params.k && params.k > 0 {
        candidates.select_nth_unstable_by(params.k - 1, by_strength);
    }
    candidates.truncate(params.k);
    candidates.sort_unstable_by(by_strength);
    candidates.into_iter().map(|(_, i)| i).collect()
}

/// Keeps the `k` strongest gated returns of every azimuth as raw-frame points.
///
/// The cloud is referenced to the scan's earliest azimuth timestamp.
pub fn k_strongest(scan: &PolarScan, params: &ExtractionParams) -> PointCloud {
    assert!(params.r_min < params.r_max, "r_min must be below r_max");
    assert!(params.k >= 1, "k must be at least 1");
    let per_azimuth: Vec<Vec<RadarPoint>> = (0..scan.azimuth_count())
        .into_par_iter()
        .map(|a| {
            let azimuth = scan.azimuths[a];
            let t = scan.timestamps[a];
            let row = scan.row(a);
            strongest_bins(row, scan.range_resolution, params)
                .into_iter()
                .map(|bin| {
                    let (x, y) = polar_to_cartesian(scan.bin_range(bin), azimuth);
                    RadarPoint::new(Vector3::new(x, y, 0.0), row[bin], t)
                })
                .collect()
        })
        .collect();
    PointCloud::new(Stage::Raw, per_azimuth.into_iter().flatten().collect(), scan.start_time())
}

/// Re-expresses every point in the sensor frame at the cloud's reference time
/// using attitude only: `p' = R(q(t_ref)⁻¹ ⊗ q(t_i)) p`.
pub fn deskew(cloud: &PointCloud, track: &AttitudeTrack) -> Result<PointCloud, ImuError> {
    debug_assert_eq!(cloud.stage, Stage::Raw);
    let q_ref_inv = track.attitude_at(cloud.t_ref)?.inverse();
    let mut relative = HashMap::new();
    for p in &cloud.points {
        if let std::collections::hash_map::Entry::Vacant(e) = relative.entry(p.t) {
            e.insert(q_ref_inv * track.attitude_at(p.t)?);
        }
    }
    let points =
        cloud.points.iter().map(|p| RadarPoint { position: relative[&p.t].rotate(&p.position), ..*p }).collect();
    Ok(PointCloud::new(Stage::Deskewed, points, cloud.t_ref))
}
