// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Scan-to-submap registration: voxel-centroid downsampling, exact k-NN
//! search, and planar point-to-point ICP.

mod icp;
mod kdtree;
mod voxel;

pub use icp::{icp_point_to_point, icp_with_index, solve_weighted_se2, Correspondence, IcpConfig, IcpResult};
pub use kdtree::{build_nn_index, KdTree, Neighbor};
pub use voxel::{voxel_downsample, VoxelGrid};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("reference cloud is empty")]
    EmptyReference,
    #[error("source cloud is empty")]
    EmptySource,
    #[error("only {matched:.1}% of source points found a correspondence")]
    NoCorrespondences { matched: f64 },
}
