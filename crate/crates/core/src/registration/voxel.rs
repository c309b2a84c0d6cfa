// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::frontend::{PointCloud, RadarPoint};
use crate::Nanos;

#[derive(Debug, Clone)]
struct Cell {
    key: [i64; 3],
    weighted_sum: Vector3<f64>,
    plain_sum: Vector3<f64>,
    weight_sum: f64,
    count: u64,
    earliest: Nanos,
    max_intensity: u8,
}

impl Cell {
    fn centroid(&self) -> Vector3<f64> {
        if self.weight_sum > 0.0 {
            self.weighted_sum / self.weight_sum
        } else {
            self.plain_sum / self.count as f64
        }
    }
}

/// Running per-voxel accumulators. Cells keep first-insertion order, so the
/// emitted cloud is deterministic.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    voxel_size: f64,
    index: HashMap<[i64; 3], usize>,
    cells: Vec<Cell>,
}

impl VoxelGrid {
    pub fn new(voxel_size: f64) -> Self {
        assert!(voxel_size > 0.0, "voxel size must be positive");
        Self { voxel_size, index: HashMap::new(), cells: Vec::new() }
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn key(&self, p: &Vector3<f64>) -> [i64; 3] {
        let d = self.voxel_size;
        [(p.x / d).floor() as i64, (p.y / d).floor() as i64, (p.z / d).floor() as i64]
    }

    pub fn insert(&mut self, p: &RadarPoint) {
        let key = self.key(&p.position);
        let i = *self.index.entry(key).or_insert_with(|| {
            self.cells.push(Cell {
                key,
                weighted_sum: Vector3::zeros(),
                plain_sum: Vector3::zeros(),
                weight_sum: 0.0,
                count: 0,
                earliest: Nanos::MAX,
                max_intensity: 0,
            });
            self.cells.len() - 1
        });
        let c = &mut self.cells[i];
        c.weighted_sum += p.position * p.weight;
        c.plain_sum += p.position;
        c.weight_sum += p.weight;
        c.count += 1;
        c.earliest = c.earliest.min(p.t);
        c.max_intensity = c.max_intensity.max(p.intensity);
    }

    pub fn extend<'a>(&mut self, points: impl IntoIterator<Item = &'a RadarPoint>) {
        for p in points {
            self.insert(p);
        }
    }

    /// Occupied voxels.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Number of points accumulated so far.
    pub fn total_count(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// `(voxel key, centroid, count, mean weight)` per occupied voxel.
    pub fn cells(&self) -> impl Iterator<Item = ([i64; 3], Vector3<f64>, u64, f64)> + '_ {
        self.cells.iter().map(|c| (c.key, c.centroid(), c.count, c.weight_sum / c.count as f64))
    }

    /// One point per voxel at the weighted centroid, with the mean weight, the
    /// earliest member timestamp and the strongest member intensity.
    pub fn points(&self) -> Vec<RadarPoint> {
        self.cells
            .iter()
            .map(|c| RadarPoint {
                position: c.centroid(),
                intensity: c.max_intensity,
                t: c.earliest,
                weight: c.weight_sum / c.count as f64,
            })
            .collect()
    }
}

/// Replaces every occupied voxel's points by their weighted centroid.
pub fn voxel_downsample(cloud: &PointCloud, d_voxel: f64) -> PointCloud {
    let mut grid = VoxelGrid::new(d_voxel);
    grid.extend(&cloud.points);
    PointCloud::new(cloud.stage, grid.points(), cloud.t_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Stage;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(Stage::Filtered, points.iter().map(|p| RadarPoint::new(Vector3::from(*p), 90, 0)).collect(), 0)
    }

    #[test]
    fn single_point_unchanged() {
        let c = cloud(&[[0.3, -4.2, 1.1]]);
        assert_eq!(voxel_downsample(&c, 1.0).points, c.points);
    }

    #[test]
    fn same_cell_merges_to_centroid() {
        let out = voxel_downsample(&cloud(&[[0.2, 0.2, 0.0], [0.6, 0.6, 0.0]]), 1.0);
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out.points[0].position, Vector3::new(0.4, 0.4, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn boundary_straddling_points_stay_apart() {
        let out = voxel_downsample(&cloud(&[[0.9, 0.0, 0.0], [1.1, 0.0, 0.0]]), 1.0);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(voxel_downsample(&cloud(&[]), 0.5).is_empty());
    }

    #[test]
    fn weights_pull_centroid_and_average() {
        let mut c = cloud(&[[0.0, 0.0, 0.0], [0.8, 0.0, 0.0]]);
        c.points[0].weight = 1.0;
        c.points[1].weight = 3.0;
        c.points[0].t = 50;
        c.points[1].t = 20;
        let out = voxel_downsample(&c, 1.0);
        assert_abs_diff_eq!(out.points[0].position.x, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.points[0].weight, 2.0, epsilon = 1e-12);
        assert_eq!(out.points[0].t, 20);
    }

    #[test]
    fn negative_coordinates_floor() {
        let g = VoxelGrid::new(1.0);
        assert_eq!(g.key(&Vector3::new(-0.1, 0.1, -1.0)), [-1, 0, -1]);
    }

    proptest! {
        #[test]
        fn downsample_invariants(
            pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -2.0f64..2.0), 0..300),
            d in 0.2f64..3.0,
        ) {
            let c = cloud(&pts.iter().map(|&(x, y, z)| [x, y, z]).collect::<Vec<_>>());
            let mut grid = VoxelGrid::new(d);
            grid.extend(&c.points);
            prop_assert!(grid.len() <= c.len());
            prop_assert_eq!(grid.total_count(), c.len() as u64);
            for (key, centroid, _, _) in grid.cells() {
                prop_assert_eq!(grid.key(&centroid), key);
            }
            let once = voxel_downsample(&c, d);
            let twice = voxel_downsample(&once, d);
            prop_assert_eq!(once.len(), twice.len());
            for (a, b) in once.points.iter().zip(&twice.points) {
                prop_assert!((a.position - b.position).norm() < 1e-12);
            }
        }
    }
}
