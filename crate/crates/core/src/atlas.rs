// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Submap storage with tilt-proximity search.
//!
//! A submap is a voxel-compacted world-frame cloud anchored at the pose of the
//! scan that created it, together with that scan's roll and pitch. A scan only
//! registers against a submap that is both within `r_submap` of the predicted
//! pose and within `theta_tilt` in roll and pitch, because a radar tilted
//! differently sees a different slice of the scene.

use std::fmt::Write as _;
use std::sync::OnceLock;

use nalgebra::Vector2;

use crate::frontend::{PointCloud, RadarPoint, Stage};
use crate::geometry::{relative_tilt, Pose2, RelativeTilt, UnitQuat};
use crate::pipeline::OdomState;
use crate::registration::{KdTree, VoxelGrid};
use crate::Nanos;

/// Roll and pitch of the scan that created a submap, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TiltSignature {
    pub roll: f64,
    pub pitch: f64,
}

impl TiltSignature {
    pub fn of(q: &UnitQuat) -> Self {
        let (roll, pitch, _) = q.to_rpy();
        Self { roll, pitch }
    }

    /// Whether both roll and pitch of `q` differ by less than `threshold` radians.
    pub fn compatible(&self, q: &UnitQuat, threshold: f64) -> bool {
        let other = Self::of(q);
        (other.roll - self.roll).abs() < threshold && (other.pitch - self.pitch).abs() < threshold
    }
}

#[derive(Debug, Clone)]
pub struct Submap {
    id: u32,
    anchor: Pose2,
    signature: TiltSignature,
    /// Full IMU attitude at creation; relative tilts are measured against it.
    reference_attitude: UnitQuat,
    grid: VoxelGrid,
    cloud: PointCloud,
    index: OnceLock<KdTree>,
    scan_count: u32,
    last_update_t: Nanos,
}

impl Submap {
    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn anchor(&self) -> &Pose2 {
        &self.anchor
    }

    pub fn signature(&self) -> TiltSignature {
        self.signature
    }

    pub fn reference_attitude(&self) -> &UnitQuat {
        &self.reference_attitude
    }

    /// Voxel-compacted world-frame cloud.
    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    /// Total scan points merged into the submap before compaction.
    pub fn merged_point_count(&self) -> u64 {
        self.grid.total_count()
    }

    pub fn scan_count(&self) -> u32 {
        self.scan_count
    }

    pub fn last_update_t(&self) -> Nanos {
        self.last_update_t
    }

    /// Nearest-neighbor index over the cloud, built on first use after a change.
    pub fn index(&self) -> &KdTree {
        self.index.get_or_init(|| KdTree::new(self.cloud.positions().copied().collect()))
    }

    fn refresh(&mut self) {
        self.cloud = PointCloud::new(Stage::Deskewed, self.grid.points(), self.last_update_t);
        self.index = OnceLock::new();
    }
}

/// Result of a successful submap search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubmapMatch {
    pub id: u32,
    /// Planar distance from the predicted pose to the anchor, meters.
    pub distance: f64,
    /// Tilt of the current attitude relative to the submap's.
    pub tilt: RelativeTilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtlasUpdate {
    Merged {
        id: u32,
    },
    Created {
        id: u32,
    },
    /// The scan had no points; nothing was stored.
    Skipped,
}

#[derive(Debug, Clone)]
pub struct Atlas {
    submaps: Vec<Submap>,
    r_submap: f64,
    theta_tilt_deg: f64,
    voxel_size: f64,
    next_id: u32,
}

/// Rotates points by the roll/pitch of `q`, expressing them in a
/// gravity-aligned frame that shares the sensor's origin and heading.
pub fn level_points(points: &[RadarPoint], q: &UnitQuat) -> Vec<RadarPoint> {
    let tilt = q.tilt_only();
    points.iter().map(|p| RadarPoint { position: tilt.rotate(&p.position), ..*p }).collect()
}

/// Lifts a scan-frame cloud into the world: level with the roll/pitch of
/// `q`, then apply the planar pose.
pub fn lift_to_world(points: &[RadarPoint], pose: &Pose2, q: &UnitQuat) -> Vec<RadarPoint> {
    level_points(points, q)
        .into_iter()
        .map(|p| RadarPoint { position: pose.transform_point3(&p.position), ..p })
        .collect()
}

impl Atlas {
    /// Scans registered within this distance of a submap anchor merge into it.
    pub fn merge_radius(&self) -> f64 {
        0.5 * self.r_submap
    }

    pub fn new(r_submap: f64, theta_tilt_deg: f64, voxel_size: f64) -> Self {
        assert!(r_submap > 0.0 && theta_tilt_deg >= 0.0 && voxel_size > 0.0);
        Self { submaps: Vec::new(), r_submap, theta_tilt_deg, voxel_size, next_id: 0 }
    }

    pub fn len(&self) -> usize {
        self.submaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submaps.is_empty()
    }

    pub fn submaps(&self) -> &[Submap] {
        &self.submaps
    }

    pub fn get(&self, id: u32) -> Option<&Submap> {
        self.submaps.binary_search_by_key(&id, |s| s.id).ok().map(|i| &self.submaps[i])
    }

    fn theta(&self) -> f64 {
        self.theta_tilt_deg.to_radians()
    }

    /// The closest submap within `r_submap` of `predicted` whose tilt
    /// signature matches `q_now`. With `tilt_search` off only distance counts.
    pub fn find_submap(&self, predicted: &Pose2, q_now: &UnitQuat, tilt_search: bool) -> Option<SubmapMatch> {
        let theta = self.theta();
        let mut best: Option<(&Submap, f64)> = None;
        for s in &self.submaps {
            let d = s.anchor.distance_to(predicted);
            if d > self.r_submap || (tilt_search && !s.signature.compatible(q_now, theta)) {
                continue;
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((s, d));
            }
        }
        best.map(|(s, distance)| SubmapMatch { id: s.id, distance, tilt: relative_tilt(q_now, &s.reference_attitude) })
    }

    /// Merges the deskewed scan into `matched` when the corrected pose is
    /// still within `r_submap / 2` of its anchor and tilt-compatible;
    /// otherwise starts a new submap anchored at `pose`.
    ///
    /// Half the search radius: at equal radii the next predicted pose would
    /// leave the search window one scan before a new submap is started.
    pub fn update(
        &mut self,
        deskewed: &PointCloud,
        pose: &Pose2,
        q_now: &UnitQuat,
        matched: Option<u32>,
    ) -> AtlasUpdate {
        if deskewed.is_empty() {
            return AtlasUpdate::Skipped;
        }
        let world = lift_to_world(&deskewed.points, pose, q_now);
        let theta = self.theta();
        let r_merge = self.merge_radius();
        let target = matched.and_then(|id| {
            self.submaps.binary_search_by_key(&id, |s| s.id).ok().filter(|&i| {
                let s = &self.submaps[i];
                s.anchor.distance_to(pose) <= r_merge && s.signature.compatible(q_now, theta)
            })
        });
        match target {
            Some(i) => {
                let s = &mut self.submaps[i];
                s.grid.extend(&world);
                s.scan_count += 1;
                s.last_update_t = s.last_update_t.max(deskewed.t_ref);
                s.refresh();
                AtlasUpdate::Merged { id: s.id }
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                let mut grid = VoxelGrid::new(self.voxel_size);
                grid.extend(&world);
                let mut s = Submap {
                    id,
                    anchor: *pose,
                    signature: TiltSignature::of(q_now),
                    reference_attitude: *q_now,
                    grid,
                    cloud: PointCloud::new(Stage::Deskewed, Vec::new(), deskewed.t_ref),
                    index: OnceLock::new(),
                    scan_count: 1,
                    last_update_t: deskewed.t_ref,
                };
                s.refresh();
                self.submaps.push(s);
                AtlasUpdate::Created { id }
            }
        }
    }

    /// One row per submap: id, anchor, tilt signature (degrees), point count.
    pub fn debug_csv(&self) -> String {
        let mut out = String::from("id,x,y,yaw,roll_deg,pitch_deg,points,scans\n");
        for s in &self.submaps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.id,
                s.anchor.x,
                s.anchor.y,
                s.anchor.yaw(),
                s.signature.roll.to_degrees(),
                s.signature.pitch.to_degrees(),
                s.cloud.len(),
                s.scan_count
            );
        }
        out
    }
}

/// Zeroes the planar velocity and yaw rate; pose and attitude are untouched.
pub fn on_miss_velocity_reset(state: &OdomState) -> OdomState {
    OdomState { velocity: Vector2::zeros(), yaw_rate: 0.0, ..*state }
}
