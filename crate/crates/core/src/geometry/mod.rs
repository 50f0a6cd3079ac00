//! Point clouds, rigid transforms, nearest-neighbor search and overlap.

mod kabsch;
mod kdtree;

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kabsch::{kabsch_fit, weighted_residual};
pub use kdtree::{brute_force_nearest, KdTree};

pub type Point = Vector3<f64>;

/// Tolerance on `R^T R = I` and `det R = 1`.
pub const ROTATION_TOL: f64 = 1e-9;

/// An ordered point set with optional per-point features (one row per point)
/// and overlap scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    features: Option<DMatrix<f64>>,
    overlap_scores: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud {
            points,
            features: None,
            overlap_scores: None,
        }
    }

    pub fn with_features(mut self, features: DMatrix<f64>) -> Result<Self> {
        self.set_features(features)?;
        Ok(self)
    }

    pub fn with_overlap_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        self.set_overlap_scores(scores)?;
        Ok(self)
    }

    pub fn set_features(&mut self, features: DMatrix<f64>) -> Result<()> {
        if features.nrows() != self.points.len() {
            return Err(Error::shape(
                format!("{} feature rows", self.points.len()),
                format!("{} rows", features.nrows()),
            ));
        }
        self.features = Some(features);
        Ok(())
    }

    pub fn set_overlap_scores(&mut self, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.points.len() {
            return Err(Error::shape(
                format!("{} overlap scores", self.points.len()),
                format!("{}", scores.len()),
            ));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("overlap score {bad} outside [0, 1]")));
        }
        self.overlap_scores = Some(scores);
        Ok(())
    }

    pub fn clear_features(&mut self) {
        self.features = None;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn features(&self) -> Option<&DMatrix<f64>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.ncols())
    }

    pub fn overlap_scores(&self) -> Option<&[f64]> {
        self.overlap_scores.as_deref()
    }

    /// Sub-cloud made of the given indices, carrying features and scores.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            features: self
                .features
                .as_ref()
                .map(|f| DMatrix::from_fn(indices.len(), f.ncols(), |r, c| f[(indices[r], c)])),
            overlap_scores: self
                .overlap_scores
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Point = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }
}

/// Rotation in SO(3) plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !ortho.is_finite() || ortho > ROTATION_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidTransform(format!("det(R) = {det}, expected +1")));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner();
        RigidTransform { rotation, translation }
    }

    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Row-major rotation followed by translation, 12 values.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            t[0], t[1], t[2],
        ]
    }
}

/// Index pairs `(i in P, j in Q)` with optional confidences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pairs: Vec<(usize, usize)>,
    confidences: Option<Vec<f64>>,
}

impl CorrespondenceSet {
    /// Validates ranges, uniqueness and confidence length.
    pub fn new(
        pairs: Vec<(usize, usize)>,
        confidences: Option<Vec<f64>>,
        len_p: usize,
        len_q: usize,
    ) -> Result<Self> {
        if let Some((i, j)) = pairs.iter().find(|(i, j)| *i >= len_p || *j >= len_q) {
            return Err(Error::invalid(format!(
                "correspondence ({i}, {j}) out of range for clouds of size {len_p} and {len_q}"
            )));
        }
        let mut sorted = pairs.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate correspondence pair"));
        }
        if let Some(c) = &confidences {
            if c.len() != pairs.len() {
                return Err(Error::shape(format!("{} confidences", pairs.len()), c.len().to_string()));
            }
            if c.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid("confidences must be finite and non-negative"));
            }
        }
        Ok(CorrespondenceSet { pairs, confidences })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn confidences(&self) -> Option<&[f64]> {
        self.confidences.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn apply_transform(cloud: &PointCloud, transform: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| transform.apply(p)).collect(),
        features: cloud.features.clone(),
        overlap_scores: cloud.overlap_scores.clone(),
    }
}

/// Nearest point of `target` to `query`; ties go to the lowest index.
pub fn nearest_neighbor(query: &Point, target: &PointCloud) -> Result<(usize, f64)> {
    brute_force_nearest(query, target.points()).ok_or(Error::EmptyCloud)
}

/// Distance from every transformed point of `p` to its nearest neighbor in `q`.
pub fn aligned_nn_distances(p: &PointCloud, q: &PointCloud, transform: &RigidTransform) -> Result<Vec<f64>> {
    if q.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::new(q.points());
    aligned_nn_distances_with(p, &tree, transform)
}

pub(crate) fn aligned_nn_distances_with(
    p: &PointCloud,
    q_tree: &KdTree,
    transform: &RigidTransform,
) -> Result<Vec<f64>> {
    p.points()
        .iter()
        .map(|x| q_tree.nearest(&transform.apply(x)).map(|(_, d)| d).ok_or(Error::EmptyCloud))
        .collect()
}

/// Fraction of points of `p` whose transformed position lies within `radius`
/// (inclusive) of their nearest neighbor in `q`.
pub fn overlap_ratio(p: &PointCloud, q: &PointCloud, transform: &RigidTransform, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::invalid("overlap radius must be positive"));
    }
    if p.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let d = aligned_nn_distances(p, q, transform)?;
    Ok(d.iter().filter(|&&x| x <= radius).count() as f64 / p.len() as f64)
}

/// Ground-truth overlap labels: 1 when the transformed point is strictly
/// closer than `eps_o` to its nearest neighbor in `q`.
pub fn overlap_labels(p: &PointCloud, q: &PointCloud, transform: &RigidTransform, eps_o: f64) -> Result<Vec<u8>> {
    if !(eps_o > 0.0) {
        return Err(Error::invalid("overlap threshold must be positive"));
    }
    let d = aligned_nn_distances(p, q, transform)?;
    Ok(d.iter().map(|&x| u8::from(x < eps_o)).collect())
}

/// Farthest point sampling of `k` indices, starting from index 0.
/// Ties go to the lowest index. Returns every index when `k >= len`.
pub fn farthest_point_sampling(cloud: &PointCloud, k: usize) -> Vec<usize> {
    let pts = cloud.points();
    if k >= pts.len() {
        return (0..pts.len()).collect();
    }
    let mut picked = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; pts.len()];
    let mut next = 0;
    for _ in 0..k {
        picked.push(next);
        let c = pts[next];
        let mut far = (f64::NEG_INFINITY, 0);
        for (i, p) in pts.iter().enumerate() {
            dist[i] = dist[i].min((p - c).norm_squared());
            if dist[i] > far.0 {
                far = (dist[i], i);
            }
        }
        next = far.1;
    }
    picked
}
