// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::kdtree::{build_nn_index, KdTree};
use super::RegistrationError;
use crate::frontend::PointCloud;
use crate::geometry::Pose2;

/// Below this matched fraction after the first iteration registration fails.
pub const MIN_MATCHED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    /// Reference neighbors per source point, each weighted `1 / k_nn`.
    /// After this stage converges, nearest-neighbor iterations refine the
    /// result; the neighborhood average is biased at the true pose.
    pub k_nn: usize,
    pub max_iterations: usize,
    pub translation_epsilon: f64,
    pub rotation_epsilon: f64,
    pub max_correspondence_distance: f64,
    /// Scale residuals by the per-point tilt-gate weights.
    pub use_point_weights: bool,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            k_nn: 4,
            max_iterations: 40,
            translation_epsilon: 1e-3,
            rotation_epsilon: 1e-4,
            max_correspondence_distance: 5.0,
            use_point_weights: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    /// Correction applied on top of the prior: `pose = prior ∘ delta`.
    pub delta: Pose2,
    /// The registered pose of the source in the reference frame.
    pub pose: Pose2,
    pub iterations: usize,
    /// Weighted mean squared planar residual at the prior, m².
    pub initial_cost: f64,
    /// Weighted mean squared planar residual at the solution, m².
    pub final_cost: f64,
    pub matched_fraction: f64,
}

/// A weighted planar point pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: Vector2<f64>,
    pub target: Vector2<f64>,
    pub weight: f64,
}

/// Weighted mean squared residual of `pairs` after applying `t` to the sources.
pub fn weighted_cost(pairs: &[Correspondence], t: &Pose2) -> f64 {
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(n, d), c| {
        (n + c.weight * (t.transform_point(&c.source) - c.target).norm_squared(), d + c.weight)
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Closed-form weighted least-squares rigid alignment in the plane: the
/// transform minimizing `Σ w |R s + t - q|²`.
///
/// If the cross-covariance vanishes the rotation is undetermined and only the
/// translation is solved.
pub fn solve_weighted_se2(pairs: &[Correspondence]) -> Option<Pose2> {
    let total: f64 = pairs.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return None;
    }
    let s_bar = pairs.iter().map(|c| c.source * c.weight).sum::<Vector2<f64>>() / total;
    let q_bar = pairs.iter().map(|c| c.target * c.weight).sum::<Vector2<f64>>() / total;
    let (mut hxx, mut hxy, mut hyx, mut hyy) = (0.0, 0.0, 0.0, 0.0);
    for c in pairs {
        let s = c.source - s_bar;
        let q = c.target - q_bar;
        hxx += c.weight * s.x * q.x;
        hxy += c.weight * s.x * q.y;
        hyx += c.weight * s.y * q.x;
        hyy += c.weight * s.y * q.y;
    }
    let sin_part = hxy - hyx;
    let cos_part = hxx + hyy;
    let scale = hxx.abs() + hxy.abs() + hyx.abs() + hyy.abs();
    let yaw = if scale <= 1e-12 * total { 0.0 } else { sin_part.atan2(cos_part) };
    let (s, c) = yaw.sin_cos();
    let rotated = Vector2::new(c * s_bar.x - s * s_bar.y, s * s_bar.x + c * s_bar.y);
    let t = q_bar - rotated;
    Some(Pose2::new(t.x, t.y, yaw))
}

/// Correspondences for each source point: up to `k_nn` reference neighbors
/// found in 3D, each contributing a planar pair.
fn correspondences(
    source: &[(Vector3<f64>, f64)],
    index: &KdTree,
    current: &Pose2,
    k: usize,
    cfg: &IcpConfig,
) -> (Vec<Correspondence>, usize) {
    let per_point: Vec<Vec<Correspondence>> = source
        .par_iter()
        .map(|(p, w)| {
            let moved = current.transform_point3(p);
            let neighbors = index.knn_within(&moved, k, cfg.max_correspondence_distance);
            let share = w / k as f64;
            neighbors
                .iter()
                .map(|n| {
                    let q = index.point(n.index);
                    Correspondence { source: moved.xy(), target: q.xy(), weight: share }
                })
                .collect()
        })
        .collect();
    let matched = per_point.iter().filter(|v| !v.is_empty()).count();
    (per_point.into_iter().flatten().collect(), matched)
}

/// Point-to-point ICP of `source` against a prebuilt reference index.
///
/// Correspondences are searched in 3D, the alignment is solved in the plane
/// (`z` does not enter the residual). Starting from `prior`, each iteration
/// composes a closed-form increment until it drops below both epsilons.
pub fn icp_with_index(
    source: &PointCloud,
    index: &KdTree,
    prior: &Pose2,
    cfg: &IcpConfig,
) -> Result<IcpResult, RegistrationError> {
    if index.is_empty() {
        return Err(RegistrationError::EmptyReference);
    }
    if source.is_empty() {
        return Err(RegistrationError::EmptySource);
    }
    assert!(cfg.k_nn >= 1 && cfg.max_iterations >= 1, "ICP config must be positive");
    let src: Vec<(Vector3<f64>, f64)> =
        source.points.iter().map(|p| (p.position, if cfg.use_point_weights { p.weight } else { 1.0 })).collect();

    let mut current = *prior;
    let mut initial_cost = None;
    let mut final_cost = 0.0;
    let mut matched_fraction = 0.0;
    let mut iterations = 0;
    let mut k = cfg.k_nn;
    let mut stage_iterations = 0;
    while stage_iterations < cfg.max_iterations {
        iterations += 1;
        stage_iterations += 1;
        let (pairs, matched) = correspondences(&src, index, &current, k, cfg);
        matched_fraction = matched as f64 / src.len() as f64;
        if iterations == 1 && matched_fraction < MIN_MATCHED_FRACTION {
            return Err(RegistrationError::NoCorrespondences { matched: 100.0 * matched_fraction });
        }
        let Some(increment) = solve_weighted_se2(&pairs) else {
            return Err(RegistrationError::NoCorrespondences { matched: 0.0 });
        };
        initial_cost.get_or_insert_with(|| weighted_cost(&pairs, &Pose2::identity()));
        final_cost = weighted_cost(&pairs, &increment);
        current = increment.compose(&current);
        let converged =
            increment.translation().norm() < cfg.translation_epsilon && increment.yaw().abs() < cfg.rotation_epsilon;
        if converged || stage_iterations == cfg.max_iterations {
            if k == 1 {
                break;
            }
            k = 1;
            stage_iterations = 0;
        }
    }
    Ok(IcpResult {
        delta: prior.between(&current),
        pose: current,
        iterations,
        initial_cost: initial_cost.unwrap_or(0.0),
        final_cost,
        matched_fraction,
    })
}

/// Point-to-point ICP against a reference cloud; builds the index first.
pub fn icp_point_to_point(
    source: &PointCloud,
    reference: &PointCloud,
    prior: &Pose2,
    cfg: &IcpConfig,
) -> Result<IcpResult, RegistrationError> {
    let index = build_nn_index(reference)?;
    icp_with_index(source, &index, prior, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{RadarPoint, Stage};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    const DEG: f64 = PI / 180.0;

    fn planar_cloud(pts: &[Vector2<f64>]) -> PointCloud {
        PointCloud::new(
            Stage::Filtered,
            pts.iter().map(|p| RadarPoint::new(Vector3::new(p.x, p.y, 0.0), 100, 0)).collect(),
            0,
        )
    }

    fn random_points(seed: u64, n: usize) -> Vec<Vector2<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect()
    }

    fn transformed(pts: &[Vector2<f64>], t: &Pose2) -> Vec<Vector2<f64>> {
        pts.iter().map(|p| t.transform_point(p)).collect()
    }

    #[test]
    fn identical_clouds_converge_immediately() {
        let pts = random_points(1, 200);
        let cloud = planar_cloud(&pts);
        let r = icp_point_to_point(&cloud, &cloud, &Pose2::identity(), &IcpConfig::default()).unwrap();
        assert!(r.delta.approx_eq(&Pose2::identity(), 1e-6), "{:?}", r.delta);
        assert_eq!(r.matched_fraction, 1.0);
    }

    #[test]
    fn recovers_known_transform() {
        let reference = random_points(2, 200);
        let t = Pose2::new(0.8, -0.5, 4.0 * DEG);
        let source = transformed(&reference, &t);
        let r = icp_point_to_point(
            &planar_cloud(&source),
            &planar_cloud(&reference),
            &Pose2::identity(),
            &IcpConfig::default(),
        )
        .unwrap();
        let inv = t.inverse();
        assert!((r.delta.translation() - inv.translation()).norm() < 0.02, "{:?}", r.delta);
        assert!((r.delta.yaw() - inv.yaw()).abs() < 0.1 * DEG);
        assert!(r.final_cost <= r.initial_cost);
    }

    #[test]
    fn disjoint_clouds_fail() {
        let a = random_points(3, 100);
        let far: Vec<_> = a.iter().map(|p| p + Vector2::new(500.0, 0.0)).collect();
        let cfg = IcpConfig { max_correspondence_distance: 5.0, ..Default::default() };
        let r = icp_point_to_point(&planar_cloud(&a), &planar_cloud(&far), &Pose2::identity(), &cfg);
        assert!(matches!(r, Err(RegistrationError::NoCorrespondences { .. })));
    }

    #[test]
    fn empty_inputs() {
        let a = planar_cloud(&random_points(4, 10));
        let empty = planar_cloud(&[]);
        let cfg = IcpConfig::default();
        assert_eq!(icp_point_to_point(&a, &empty, &Pose2::identity(), &cfg), Err(RegistrationError::EmptyReference));
        assert_eq!(icp_point_to_point(&empty, &a, &Pose2::identity(), &cfg), Err(RegistrationError::EmptySource));
    }

    #[test]
    fn degenerate_rotation_solves_translation_only() {
        let pairs =
            vec![Correspondence { source: Vector2::new(1.0, 1.0), target: Vector2::new(3.0, 0.0), weight: 1.0 }];
        let t = solve_weighted_se2(&pairs).unwrap();
        assert_eq!(t.yaw(), 0.0);
        assert!((t.translation() - Vector2::new(2.0, -1.0)).norm() < 1e-12);
        assert!(solve_weighted_se2(&[]).is_none());
    }

    #[test]
    fn conjugation_equivariance() {
        let reference = random_points(5, 200);
        let x = Pose2::new(0.8, -0.5, 4.0 * DEG);
        let source = transformed(&reference, &x);
        let cfg = IcpConfig { translation_epsilon: 1e-9, rotation_epsilon: 1e-10, ..Default::default() };
        let base =
            icp_point_to_point(&planar_cloud(&source), &planar_cloud(&reference), &Pose2::identity(), &cfg).unwrap();

        let t = Pose2::new(12.0, -7.0, 0.7);
        let moved = icp_point_to_point(
            &planar_cloud(&transformed(&source, &t)),
            &planar_cloud(&transformed(&reference, &t)),
            &Pose2::identity(),
            &cfg,
        )
        .unwrap();
        let expected = t.compose(&base.delta).compose(&t.inverse());
        assert!(moved.delta.approx_eq(&expected, 1e-5), "{:?} vs {:?}", moved.delta, expected);
    }

    #[test]
    fn point_weights_toggle() {
        let reference = random_points(6, 150);
        let mut source = planar_cloud(&transformed(&reference, &Pose2::new(0.3, 0.1, 0.01)));
        for (i, p) in source.points.iter_mut().enumerate() {
            p.weight = if i % 2 == 0 { 1.0 } else { 0.85 };
        }
        let reference = planar_cloud(&reference);
        for use_point_weights in [true, false] {
            let cfg = IcpConfig { use_point_weights, ..Default::default() };
            let r = icp_point_to_point(&source, &reference, &Pose2::identity(), &cfg).unwrap();
            assert!(r.final_cost < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn procrustes_never_increases_cost(
            pts in proptest::collection::vec((-30.0f64..30.0, -30.0f64..30.0, -30.0f64..30.0, -30.0f64..30.0, 0.01f64..1.0), 1..60),
        ) {
            let pairs: Vec<_> = pts.iter().map(|&(a, b, c, d, w)| Correspondence {
                source: Vector2::new(a, b), target: Vector2::new(c, d), weight: w,
            }).collect();
            let t = solve_weighted_se2(&pairs).unwrap();
            let before = weighted_cost(&pairs, &Pose2::identity());
            let after = weighted_cost(&pairs, &t);
            prop_assert!(after <= before + 1e-9 * (1.0 + before));
            // Optimality: small perturbations do not improve on the solution.
            for d in [Pose2::new(1e-3, 0.0, 0.0), Pose2::new(0.0, -1e-3, 0.0), Pose2::new(0.0, 0.0, 1e-4)] {
                prop_assert!(weighted_cost(&pairs, &d.compose(&t)) >= after - 1e-9 * (1.0 + after));
            }
        }

        #[test]
        fn exact_pairs_are_recovered(x in -5.0f64..5.0, y in -5.0f64..5.0, yaw in -3.0f64..3.0) {
            let t = Pose2::new(x, y, yaw);
            let src = random_points(7, 20);
            let pairs: Vec<_> = src.iter().map(|s| Correspondence { source: *s, target: t.transform_point(s), weight: 1.0 }).collect();
            prop_assert!(solve_weighted_se2(&pairs).unwrap().approx_eq(&t, 1e-9));
        }
    }
}
