// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

use nalgebra::Vector3;

use super::RegistrationError;
use crate::frontend::PointCloud;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the indexed point set.
    pub index: usize,
    pub distance_sq: f64,
}

#[derive(Debug, Clone)]
struct Node {
    point: u32,
    axis: u8,
    left: u32,
    right: u32,
}

/// Static 3D k-d tree with exact k-nearest-neighbor queries.
///
/// Results are ordered by `(distance, index)`, so ties resolve the same way
/// as a sorted brute-force scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    root: u32,
}

impl KdTree {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        assert!(points.len() < NONE as usize, "too many points for the index");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build(&points, &mut order, &mut nodes);
        Self { points, nodes, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Vector3<f64> {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// The `k` nearest points, closest first.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        self.knn_within(query, k, f64::INFINITY)
    }

    /// The `k` nearest points no farther than `max_distance`, closest first.
    pub fn knn_within(&self, query: &Vector3<f64>, k: usize, max_distance: f64) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        if k == 0 || self.root == NONE {
            return best;
        }
        let bound = max_distance * max_distance;
        self.search(self.root, query, k, bound, &mut best);
        best
    }

    fn search(&self, node: u32, q: &Vector3<f64>, k: usize, bound: f64, best: &mut Vec<Neighbor>) {
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        let d = (p - q).norm_squared();
        if d <= bound {
            insert_sorted(best, Neighbor { index: n.point as usize, distance_sq: d }, k);
        }
        let axis = n.axis as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if near != NONE {
            self.search(near, q, k, bound, best);
        }
        if far != NONE {
            let worst = if best.len() == k { best[k - 1].distance_sq } else { bound };
            // Equal distances may still hold a lower index, so visit on ties.
            if diff * diff <= worst {
                self.search(far, q, k, bound, best);
            }
        }
    }
}

fn insert_sorted(best: &mut Vec<Neighbor>, n: Neighbor, k: usize) {
    let key = |x: &Neighbor| (x.distance_sq, x.index);
    if best.len() == k && key(&n) >= key(&best[k - 1]) {
        return;
    }
    let pos = best.partition_point(|b| key(b) < key(&n));
    best.insert(pos, n);
    best.truncate(k);
}

fn build(points: &[Vector3<f64>], order: &mut [u32], nodes: &mut Vec<Node>) -> u32 {
    if order.is_empty() {
        return NONE;
    }
    // Split along the axis of widest spread.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i as usize]);
        hi = hi.sup(&points[i as usize]);
    }
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis]).then(a.cmp(&b))
    });
    let id = nodes.len() as u32;
    nodes.push(Node { point: order[mid], axis: axis as u8, left: NONE, right: NONE });
    let (left, rest) = order.split_at_mut(mid);
    let left_id = build(points, left, nodes);
    let right_id = build(points, &mut rest[1..], nodes);
    nodes[id as usize].left = left_id;
    nodes[id as usize].right = right_id;
    id
}

/// Builds the exact k-NN index over a reference cloud.
pub fn build_nn_index(reference: &PointCloud) -> Result<KdTree, RegistrationError> {
    if reference.is_empty() {
        return Err(RegistrationError::EmptyReference);
    }
    Ok(KdTree::new(reference.positions().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{RadarPoint, Stage};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_force(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize, max_d: f64) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor { index, distance_sq: (p - q).norm_squared() })
            .filter(|n| n.distance_sq <= max_d * max_d)
            .collect();
        all.sort_by(|a, b| a.distance_sq.total_cmp(&b.distance_sq).then(a.index.cmp(&b.index)));
        all.truncate(k);
        all
    }

    #[test]
    fn query_at_existing_point() {
        let pts = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-4.0, 0.0, 1.0), Vector3::new(7.0, 7.0, 7.0)];
        let tree = KdTree::new(pts);
        let n = tree.knn(&Vector3::new(-4.0, 0.0, 1.0), 1);
        assert_eq!(n, vec![Neighbor { index: 1, distance_sq: 0.0 }]);
    }

    #[test]
    fn collinear_example() {
        let tree = KdTree::new(vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0)]);
        let idx: Vec<usize> = tree.knn(&Vector3::new(1.9, 0.0, 0.0), 2).iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![1, 2]);
    }

    #[test]
    fn k_larger_than_reference() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64 * 2.0, 0.0, 0.0)).collect();
        let tree = KdTree::new(pts.clone());
        let q = Vector3::new(3.1, 0.0, 0.0);
        let n = tree.knn(&q, 50);
        assert_eq!(n.len(), 5);
        assert_eq!(n, brute_force(&pts, &q, 50, f64::INFINITY));
    }

    #[test]
    fn radius_limit() {
        let tree = KdTree::new(vec![Vector3::zeros(), Vector3::new(10.0, 0.0, 0.0)]);
        assert_eq!(tree.knn_within(&Vector3::new(1.0, 0.0, 0.0), 4, 5.0).len(), 1);
        assert!(tree.knn_within(&Vector3::new(500.0, 0.0, 0.0), 4, 5.0).is_empty());
    }

    #[test]
    fn empty_reference_rejected() {
        let empty = PointCloud::new(Stage::Filtered, Vec::<RadarPoint>::new(), 0);
        assert!(matches!(build_nn_index(&empty), Err(RegistrationError::EmptyReference)));
    }

    #[test]
    fn matches_brute_force_on_large_clouds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for n in [1usize, 2, 17, 500, 2000] {
            let pts: Vec<_> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-3.0..3.0),
                    )
                })
                .collect();
            let tree = KdTree::new(pts.clone());
            for _ in 0..200 {
                let q = Vector3::new(
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-4.0..4.0),
                );
                let k = rng.random_range(1..10);
                let r = rng.random_range(0.5..30.0);
                assert_eq!(tree.knn_within(&q, k, r), brute_force(&pts, &q, k, r));
            }
        }
    }

    proptest! {
        #[test]
        fn grid_ties_match_brute_force(
            pts in proptest::collection::vec((0i32..5, 0i32..5, 0i32..2), 1..80),
            q in (0i32..5, 0i32..5, 0i32..2),
            k in 1usize..8,
        ) {
            // Integer lattices force many equal distances.
            let pts: Vec<_> = pts.iter().map(|&(x, y, z)| Vector3::new(x as f64, y as f64, z as f64)).collect();
            let q = Vector3::new(q.0 as f64 + 0.5, q.1 as f64, q.2 as f64);
            let tree = KdTree::new(pts.clone());
            prop_assert_eq!(tree.knn(&q, k), brute_force(&pts, &q, k, f64::INFINITY));
        }
    }
}
