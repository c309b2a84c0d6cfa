// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Tilt gate: Cauchy weighting of deskewed points by how far they would move
//! vertically under the relative tilt between the scan and its reference
//! submap, followed by a hard weight threshold.
//!
//! A rotating radar observes a thin slice of the world around its sensor
//! plane. When the plane tilts relative to the plane the submap was built
//! from, returns far from the tilt axis come from different heights of the
//! scene and stop being comparable. Points near the axis are unaffected.
//!
//! Since the Cauchy weight is monotone, the hard threshold is equivalent to a
//! displacement cutoff:
//!
//! ```text
//! w = 1 / (1 + (d / gamma)^2) >= tau   <=>   d <= gamma * sqrt(1 / tau - 1)
//! ```

use nalgebra::Vector3;
use thiserror::Error;

use crate::frontend::{PointCloud, Stage};
use crate::geometry::RelativeTilt;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TiltGateError {
    #[error("tilt gate rejected all {input} points")]
    AllPointsRejected { input: usize },
    #[error("invalid tilt gate parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltGateParams {
    /// Cauchy scale, meters.
    pub gamma: f64,
    /// Minimum weight a point needs to survive, in `(0, 1]`.
    pub tau_tilt: f64,
    /// Relative tilt below which the gate passes everything through, degrees.
    pub theta_tilt_deg: f64,
}

impl Default for TiltGateParams {
    fn default() -> Self {
        Self { gamma: 3.5, tau_tilt: 0.8, theta_tilt_deg: 3.0 }
    }
}

impl TiltGateParams {
    pub fn validate(&self) -> Result<(), TiltGateError> {
        if !(self.gamma > 0.0) {
            return Err(TiltGateError::InvalidParams("gamma must be positive"));
        }
        if !(self.tau_tilt > 0.0 && self.tau_tilt <= 1.0) {
            return Err(TiltGateError::InvalidParams("tau_tilt must lie in (0, 1]"));
        }
        if !(self.theta_tilt_deg >= 0.0) {
            return Err(TiltGateError::InvalidParams("theta_tilt must be non-negative"));
        }
        Ok(())
    }

    /// Largest vertical displacement that still passes the weight threshold.
    pub fn displacement_cutoff(&self) -> f64 {
        self.gamma * (1.0 / self.tau_tilt - 1.0).sqrt()
    }

    /// Whether a relative tilt is large enough to engage the gate.
    pub fn engages(&self, tilt: &RelativeTilt) -> bool {
        tilt.angle() >= self.theta_tilt_deg.to_radians()
    }
}

/// Vertical motion of `p` when the relative tilt is applied about the
/// horizontal axis through the sensor origin, `|e_z · (R p - p)|`.
pub fn vertical_displacement(p: &Vector3<f64>, tilt: &RelativeTilt) -> f64 {
    if tilt.angle() == 0.0 {
        return 0.0;
    }
    (tilt.rotation().rotate(p).z - p.z).abs()
}

/// Cauchy weight `1 / (1 + (d / gamma)^2)`.
pub fn cauchy_weight(delta_d: f64, gamma: f64) -> f64 {
    debug_assert!(delta_d >= 0.0 && gamma > 0.0);
    let u = delta_d / gamma;
    1.0 / (1.0 + u * u)
}

/// Applies the gate to a deskewed cloud.
///
/// Below the activation tilt the cloud passes unchanged. Otherwise only points
/// whose weight reaches `tau_tilt` survive, in their original order, each
/// carrying its weight (multiplied into any weight it already had).
pub fn tilt_filter(
    cloud: &PointCloud,
    tilt: &RelativeTilt,
    params: &TiltGateParams,
) -> Result<PointCloud, TiltGateError> {
    params.validate()?;
    if !params.engages(tilt) {
        return Ok(cloud.clone().advance(Stage::Filtered));
    }
    let rotation = tilt.rotation();
    let points: Vec<_> = cloud
        .points
        .iter()
        .filter_map(|p| {
            let d = (rotation.rotate(&p.position).z - p.position.z).abs();
            let w = cauchy_weight(d, params.gamma);
            (w >= params.tau_tilt).then(|| {
                let mut kept = *p;
                kept.weight *= w;
                kept
            })
        })
        .collect();
    if points.is_empty() && !cloud.is_empty() {
        return Err(TiltGateError::AllPointsRejected { input: cloud.len() });
    }
    Ok(PointCloud::new(Stage::Filtered, points, cloud.t_ref))
}
