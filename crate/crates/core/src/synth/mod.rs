//! Synthetic partially overlapping scan pairs with exact ground truth.

mod features;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{overlap_ratio, CorrespondenceSet, KdTree, Point, PointCloud, RigidTransform};
use crate::rng::{derive_seed, substream, Rng};

pub use features::{feature_scale, local_descriptor, oracle_features, DESCRIPTOR_SCALES};

/// Default Eq.-1 overlap radius used when measuring the generated overlap.
pub const DEFAULT_OVERLAP_RADIUS: f64 = 0.05;
/// Allowed deviation of the measured overlap from the target.
pub const OVERLAP_TOLERANCE: f64 = 0.05;
const BISECTION_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    GaussianBlobs,
    BoxRoom,
    SinusoidalTerrain,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::GaussianBlobs => "gaussian-blobs",
            Shape::BoxRoom => "box-room",
            Shape::SinusoidalTerrain => "sinusoidal-terrain",
        })
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blobs" => Ok(Shape::GaussianBlobs),
            "box-room" => Ok(Shape::BoxRoom),
            "sinusoidal-terrain" => Ok(Shape::SinusoidalTerrain),
            other => Err(Error::invalid(format!("unknown shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_points: usize,
    pub shape: Shape,
    pub overlap_target: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub crop_axis: Vector3<f64>,
    /// Radius `v` used to measure the overlap ratio.
    pub overlap_radius: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 2000,
            shape: Shape::GaussianBlobs,
            overlap_target: 0.5,
            noise_sigma: 0.005,
            seed: 0,
            crop_axis: Vector3::x(),
            overlap_radius: DEFAULT_OVERLAP_RADIUS,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 50 {
            return Err(Error::invalid(format!("scenes need at least 50 points, got {}", self.n_points)));
        }
        if !(self.overlap_target > 0.0 && self.overlap_target <= 1.0) {
            return Err(Error::invalid("overlap_target must lie in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        if !(self.crop_axis.norm() > 0.0 && self.crop_axis.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("crop_axis must be a non-zero vector"));
        }
        if !(self.overlap_radius > 0.0) {
            return Err(Error::invalid("overlap_radius must be positive"));
        }
        Ok(())
    }
}

/// `gt` maps `p` into the frame of `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub p: PointCloud,
    pub q: PointCloud,
    pub gt: RigidTransform,
    pub gt_corr: CorrespondenceSet,
    /// Measured overlap ratio of `p` at the configured radius.
    pub overlap: f64,
}

/// Rotation uniform on SO(3) from a normalized isotropic Gaussian quaternion.
pub fn random_rotation(rng: &mut Rng) -> UnitQuaternion<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        if raw.norm() > 1e-12 {
            return UnitQuaternion::from_quaternion(raw);
        }
    }
}

fn base_cloud(shape: Shape, n: usize, rng: &mut Rng) -> Vec<Point> {
    match shape {
        Shape::GaussianBlobs => {
            let blobs: Vec<(Point, f64)> = (0..8)
                .map(|_| {
                    let c = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    (c, rng.random_range(0.1..0.3))
                })
                .collect();
            (0..n)
                .map(|_| {
                    let (c, s) = blobs[rng.random_range(0..blobs.len())];
                    let d: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
                    c + Vector3::from(d) * s
                })
                .collect()
        }
        Shape::BoxRoom => {
            let half = Vector3::new(1.5, 1.25, 1.0);
            // A few boxes inside the room break its symmetry.
            let furniture: Vec<(Point, Vector3<f64>)> = (0..4)
                .map(|_| {
                    let size = Vector3::new(rng.random_range(0.15..0.5), rng.random_range(0.15..0.5), rng.random_range(0.2..0.6));
                    let c = Vector3::new(
                        rng.random_range(-half.x + size.x..half.x - size.x),
                        rng.random_range(-half.y + size.y..half.y - size.y),
                        -half.z + size.z,
                    );
                    (c, size)
                })
                .collect();
            let mut boxes = vec![(Vector3::zeros(), half)];
            boxes.extend(furniture);
            let areas: Vec<f64> = boxes.iter().map(|(_, h)| 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z)).collect();
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let mut pick = rng.random_range(0.0..total);
                    let mut k = 0;
                    while pick > areas[k] && k + 1 < areas.len() {
                        pick -= areas[k];
                        k += 1;
                    }
                    let (c, h) = boxes[k];
                    sample_box_surface(&c, &h, rng)
                })
                .collect()
        }
        Shape::SinusoidalTerrain => {
            let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
            (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(-1.5..1.5);
                    let y: f64 = rng.random_range(-1.5..1.5);
                    let z = 0.3 * (2.0 * x + phase[0]).sin() * (3.0 * y + phase[1]).cos()
                        + 0.15 * (5.0 * x - 4.0 * y + phase[2]).sin();
                    Vector3::new(x, y, z)
                })
                .collect()
        }
    }
}

fn sample_box_surface(center: &Point, half: &Vector3<f64>, rng: &mut Rng) -> Point {
    let faces = [half.y * half.z, half.x * half.z, half.x * half.y];
    let total: f64 = faces.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut axis = 0;
    while pick > faces[axis] && axis < 2 {
        pick -= faces[axis];
        axis += 1;
    }
    let mut p = Vector3::new(
        rng.random_range(-half.x..half.x),
        rng.random_range(-half.y..half.y),
        rng.random_range(-half.z..half.z),
    );
    p[axis] = if rng.random_bool(0.5) { half[axis] } else { -half[axis] };
    center + p
}

/// Crops, perturbs and transforms the two copies for one slab half-width.
struct Crop<'a> {
    base: &'a [Point],
    noise_p: &'a [Vector3<f64>],
    noise_q: &'a [Vector3<f64>],
    heights: Vec<f64>,
    median: f64,
    gt: &'a RigidTransform,
}

impl Crop<'_> {
    fn indices(&self, delta: f64) -> (Vec<usize>, Vec<usize>) {
        let p = (0..self.base.len()).filter(|&i| self.heights[i] <= self.median + delta).collect();
        let q = (0..self.base.len()).filter(|&i| self.heights[i] >= self.median - delta).collect();
        (p, q)
    }

    fn clouds(&self, delta: f64) -> (PointCloud, PointCloud) {
        let (pi, qi) = self.indices(delta);
        let p = PointCloud::new(pi.iter().map(|&i| self.base[i] + self.noise_p[i]).collect());
        let q = PointCloud::new(qi.iter().map(|&i| self.gt.apply(&(self.base[i] + self.noise_q[i]))).collect());
        (p, q)
    }

    fn ratio(&self, delta: f64, radius: f64) -> Result<f64> {
        let (p, q) = self.clouds(delta);
        if p.is_empty() || q.is_empty() {
            return Ok(0.0);
        }
        overlap_ratio(&p, &q, self.gt, radius)
    }
}

pub fn generate_pair(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, "generator", 0);
    let base = base_cloud(cfg.shape, cfg.n_points, &mut rng);
    let rotation = random_rotation(&mut rng);
    let translation = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let gt = RigidTransform::new(rotation.to_rotation_matrix().into_inner(), translation)?;

    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut noise_rng = substream(cfg.seed, "noise", 0);
    let mut draw = |n: usize| -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(noise.sample(&mut noise_rng), noise.sample(&mut noise_rng), noise.sample(&mut noise_rng)))
            .collect()
    };
    let noise_p = draw(base.len());
    let noise_q = draw(base.len());

    let axis = cfg.crop_axis.normalize();
    let heights: Vec<f64> = base.iter().map(|p| p.dot(&axis)).collect();
    let mut sorted = heights.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let span = sorted[sorted.len() - 1] - sorted[0];
    let crop = Crop { base: &base, noise_p: &noise_p, noise_q: &noise_q, heights, median, gt: &gt };

    let v = cfg.overlap_radius;
    let target = cfg.overlap_target;
    let (mut lo, mut hi) = (0.0, span + 1.0);
    let (r_lo, r_hi) = (crop.ratio(lo, v)?, crop.ratio(hi, v)?);
    let delta = if (r_hi - target).abs() <= OVERLAP_TOLERANCE / 5.0 && target >= 1.0 - 1e-12 {
        hi
    } else {
        if target < r_lo - OVERLAP_TOLERANCE || target > r_hi + OVERLAP_TOLERANCE {
            return Err(Error::CropSearch { target, low: r_lo, high: r_hi });
        }
        let mut best = (f64::INFINITY, hi);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let r = crop.ratio(mid, v)?;
            if (r - target).abs() < best.0 {
                best = ((r - target).abs(), mid);
            }
            if r < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if best.0 > OVERLAP_TOLERANCE {
            return Err(Error::CropSearch { target, low: r_lo, high: r_hi });
        }
        best.1
    };

    let (p, q) = crop.clouds(delta);
    let overlap = overlap_ratio(&p, &q, &gt, v)?;
    let gt_corr = mutual_correspondences(&p, &q, &gt, (3.0 * cfg.noise_sigma).max(1e-6))?;
    Ok(Scene { p, q, gt, gt_corr, overlap })
}

/// Pairs `(i, j)` that are mutual nearest neighbors after aligning `p` by `gt`
/// and lie within `radius` of each other.
pub fn mutual_correspondences(p: &PointCloud, q: &PointCloud, gt: &RigidTransform, radius: f64) -> Result<CorrespondenceSet> {
    let aligned: Vec<Point> = p.points().iter().map(|x| gt.apply(x)).collect();
    let tp = KdTree::new(&aligned);
    let tq = KdTree::new(q.points());
    let mut pairs = Vec::new();
    for (i, a) in aligned.iter().enumerate() {
        if let Some((j, d)) = tq.nearest(a) {
            if d <= radius && tp.nearest(&q.points()[j]).map(|(k, _)| k) == Some(i) {
                pairs.push((i, j));
            }
        }
    }
    CorrespondenceSet::new(pairs, None, p.len(), q.len())
}

/// Seeds for a suite of scenes derived from one root seed.
pub fn suite_seed(root: u64, index: u64) -> u64 {
    derive_seed(root, "scene", index)
}
