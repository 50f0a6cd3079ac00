//! Static kd-tree over 3D points.
//!
//! The tree is built once over an immutable point set and stored implicitly:
//! the permutation `order` is arranged so that every subrange `[lo, hi)` has
//! its splitting point at `(lo + hi) / 2`. Queries are read-only and may run
//! concurrently.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

/// Lexicographic (squared distance, index) comparison; the tie rule for all
/// nearest-neighbor queries is "lowest index wins".
#[inline]
fn better(d2: f64, idx: usize, best_d2: f64, best_idx: usize) -> bool {
    d2 < best_d2 || (d2 == best_d2 && idx < best_idx)
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axes: vec![0; points.len()],
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let axis = (max - min).imax();
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Nearest point to `query`: `(index, euclidean distance)`.
    /// Returns `None` on an empty tree.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(query, 0, self.points.len(), &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn nearest_in(&self, q: &Vector3<f64>, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d2 = (self.points[i] - q).norm_squared();
                if better(d2, i, best.1, best.0) {
                    *best = (i, d2);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let axis = self.axes[mid] as usize;
        let d2 = (self.points[idx] - q).norm_squared();
        if better(d2, idx, best.1, best.0) {
            *best = (idx, d2);
        }
        let diff = q[axis] - self.points[idx][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(q, near.0, near.1, best);
        // `<=` keeps equal-distance candidates with lower indices reachable.
        if diff * diff <= best.1 {
            self.nearest_in(q, far.0, far.1, best);
        }
    }

    /// All indices within `radius` of `query` (inclusive), sorted ascending.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() && radius >= 0.0 {
            self.radius_in(query, radius * radius, 0, self.points.len(), &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_in(&self, q: &Vector3<f64>, r2: f64, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            out.extend(
                self.order[lo..hi]
                    .iter()
                    .copied()
                    .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
            );
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let axis = self.axes[mid] as usize;
        if (self.points[idx] - q).norm_squared() <= r2 {
            out.push(idx);
        }
        let diff = q[axis] - self.points[idx][axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_in(q, r2, lo, mid, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_in(q, r2, mid + 1, hi, out);
        }
    }

    /// The `k` nearest points sorted by (distance, index).
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.knn_in(query, k, 0, self.points.len(), &mut heap);
        }
        heap.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    // `found` is kept sorted; k is small in every caller.
    fn knn_in(&self, q: &Vector3<f64>, k: usize, lo: usize, hi: usize, found: &mut Vec<(f64, usize)>) {
        let offer = |i: usize, found: &mut Vec<(f64, usize)>| {
            let d2 = (self.points[i] - q).norm_squared();
            if found.len() == k {
                let (wd, wi) = found[k - 1];
                if !better(d2, i, wd, wi) {
                    return;
                }
                found.pop();
            }
            let pos = found.partition_point(|&(fd, fi)| better(fd, fi, d2, i));
            found.insert(pos, (d2, i));
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(i, found);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let axis = self.axes[mid] as usize;
        offer(idx, found);
        let diff = q[axis] - self.points[idx][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_in(q, k, near.0, near.1, found);
        if found.len() < k || diff * diff <= found[k - 1].0 {
            self.knn_in(q, k, far.0, far.1, found);
        }
    }
}

/// Exhaustive nearest-neighbor scan with the same tie rule as [`KdTree`].
pub fn brute_force_nearest(query: &Vector3<f64>, points: &[Vector3<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        match best {
            Some((bi, bd)) if !better(d2, i, bd, bi) => {}
            _ => best = Some((i, d2)),
        }
    }
    best.map(|(i, d2)| (i, d2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let pts = random_points(500, 1);
        let tree = KdTree::new(&pts);
        let queries = random_points(300, 2);
        for q in queries.iter().chain(pts.iter()) {
            let a = tree.nearest(q).unwrap();
            let b = brute_force_nearest(q, &pts).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // Many exact duplicates on a grid force ties at every level.
        let mut pts = Vec::new();
        for _ in 0..4 {
            for x in 0..5 {
                for y in 0..5 {
                    pts.push(Vector3::new(x as f64, y as f64, 0.0));
                }
            }
        }
        let tree = KdTree::new(&pts);
        for (i, p) in pts.iter().enumerate().take(25) {
            assert_eq!(tree.nearest(p).unwrap().0, i);
        }
        // Equidistant from (0,0) and (1,0): index 0 wins.
        assert_eq!(tree.nearest(&Vector3::new(0.5, 0.0, 0.0)).unwrap().0, 0);
    }

    #[test]
    fn radius_and_knn_match_brute_force() {
        let pts = random_points(400, 3);
        let tree = KdTree::new(&pts);
        for q in random_points(50, 4) {
            let mut expect: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - q).norm() <= 0.2)
                .collect();
            expect.sort_unstable();
            assert_eq!(tree.within_radius(&q, 0.2), expect);

            let mut all: Vec<(f64, usize)> =
                pts.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let knn: Vec<usize> = tree.k_nearest(&q, 7).into_iter().map(|x| x.0).collect();
            let want: Vec<usize> = all.iter().take(7).map(|x| x.1).collect();
            assert_eq!(knn, want);
        }
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(&Vector3::zeros()).is_none());
        assert!(tree.within_radius(&Vector3::zeros(), 1.0).is_empty());
    }

    proptest::proptest! {
        #[test]
        fn queries_agree_with_brute_force(seed in 0u64..1_000, n in 1usize..200, k in 1usize..12,
                                          qx in -0.5f64..1.5, qy in -0.5f64..1.5, qz in -0.5f64..1.5) {
            let pts = random_points(n, seed);
            let tree = KdTree::new(&pts);
            let q = Vector3::new(qx, qy, qz);
            let (_, d) = tree.nearest(&q).unwrap();
            let (_, d_ref) = brute_force_nearest(&q, &pts).unwrap();
            proptest::prop_assert!((d - d_ref).abs() < 1e-12);
            let knn = tree.k_nearest(&q, k);
            let mut all: Vec<f64> = pts.iter().map(|p| (p - q).norm()).collect();
            all.sort_by(f64::total_cmp);
            proptest::prop_assert_eq!(knn.len(), k.min(n));
            for ((_, got), want) in knn.iter().zip(&all) {
                proptest::prop_assert!((got - want).abs() < 1e-12);
            }
            let mut inside = tree.within_radius(&q, 0.3);
            inside.sort_unstable();
            let expected: Vec<usize> = (0..n).filter(|&i| (pts[i] - q).norm() <= 0.3).collect();
            proptest::prop_assert_eq!(inside, expected);
        }
    }
}
