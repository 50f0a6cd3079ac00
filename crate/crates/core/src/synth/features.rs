use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud, RigidTransform};
use crate::rng::substream;

/// Neighborhood radii of the local descriptor, as multiples of its radius.
pub const DESCRIPTOR_SCALES: [f64; 3] = [0.5, 1.0, 2.0];
const HISTOGRAM_BINS: usize = 12;
/// Eigenvalue triple and centroid offset.
const PER_SCALE: usize = 4;
const RAW_DIM: usize = PER_SCALE * DESCRIPTOR_SCALES.len() + 1 + HISTOGRAM_BINS;
/// Relative weight of the shape channels against the histogram.
const SHAPE_WEIGHT: f64 = 3.0;

/// `b × d` matrix with orthonormal columns (the identity for `b = d`), drawn
/// from a seeded Gaussian matrix. For `b < d` the rows are orthonormal instead.
fn orthonormal_map(b: usize, d: usize, seed: u64, stream: &str) -> DMatrix<f64> {
    if b == d {
        return DMatrix::identity(b, d);
    }
    let mut rng = substream(seed, stream, 0);
    let (rows, cols) = if b > d { (b, d) } else { (d, b) };
    let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    if b > d {
        q
    } else {
        q.transpose()
    }
}

/// Median nearest-neighbor spacing of the cloud; zero for fewer than two points.
pub fn feature_scale(cloud: &PointCloud) -> f64 {
    if cloud.len() < 2 {
        return 0.0;
    }
    let tree = KdTree::new(cloud.points());
    let mut d: Vec<f64> = cloud
        .points()
        .iter()
        .map(|p| tree.k_nearest(p, 2).get(1).map_or(0.0, |x| x.1))
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Features that leak the ground truth: a point's coordinate in the frame of
/// `q`, embedded isometrically into `b` dimensions. Points of `p` get
/// Gaussian noise of standard deviation `noise` per channel.
pub fn oracle_features(
    p: &PointCloud,
    q: &PointCloud,
    gt: &RigidTransform,
    b: usize,
    noise: f64,
    seed: u64,
) -> Result<(PointCloud, PointCloud)> {
    if b < 3 {
        return Err(Error::invalid(format!("oracle features need b >= 3, got {b}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::invalid("feature noise must be non-negative"));
    }
    let map = orthonormal_map(b, 3, seed, "oracle-map");
    let dist = Normal::new(0.0, noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = substream(seed, "oracle-noise", 0);
    let embed = |x: &Vector3<f64>| &map * x;
    let mut fp = DMatrix::zeros(p.len(), b);
    for (i, x) in p.points().iter().enumerate() {
        let f = embed(&gt.apply(x));
        for c in 0..b {
            fp[(i, c)] = f[c] + if noise > 0.0 { dist.sample(&mut rng) } else { 0.0 };
        }
    }
    let mut fq = DMatrix::zeros(q.len(), b);
    for (j, x) in q.points().iter().enumerate() {
        fq.row_mut(j).copy_from(&embed(x).transpose());
    }
    Ok((p.clone().with_features(fp)?, q.clone().with_features(fq)?))
}

/// Rigid-invariant handcrafted descriptor, projected to `b` dimensions.
///
/// For each scale in [`DESCRIPTOR_SCALES`] the neighborhood within
/// `scale · radius` contributes the square roots of its covariance
/// eigenvalues (sorted, divided by the scale radius) and its centroid offset.
/// The neighborhood at `radius` adds its log neighbor count and a linearly
/// interpolated histogram of neighbor distances, as square-rooted counts.
/// Isolated points get the zero descriptor.
pub fn local_descriptor(cloud: &PointCloud, radius: f64, b: usize, seed: u64) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(Error::invalid("descriptor radius must be positive"));
    }
    if b == 0 {
        return Err(Error::invalid("descriptor dimension must be positive"));
    }
    let map = orthonormal_map(b, RAW_DIM, seed, "descriptor-map");
    let pts = cloud.points();
    let tree = KdTree::new(pts);
    let rows: Vec<DVector<f64>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let raw = raw_descriptor(&tree, i, radius);
            if raw.iter().all(|&x| x == 0.0) {
                DVector::zeros(b)
            } else {
                &map * raw
            }
        })
        .collect();
    let features = DMatrix::from_fn(pts.len(), b, |i, c| rows[i][c]);
    cloud.clone().with_features(features)
}

fn raw_descriptor(tree: &KdTree, i: usize, radius: f64) -> DVector<f64> {
    let pts = tree.points();
    let center = pts[i];
    let mut out = DVector::zeros(RAW_DIM);
    let widest = radius * DESCRIPTOR_SCALES.iter().copied().fold(0.0, f64::max);
    let all: Vec<(usize, f64)> = tree
        .within_radius(&center, widest)
        .into_iter()
        .filter(|&j| j != i)
        .map(|j| (j, (pts[j] - center).norm()))
        .collect();
    if all.is_empty() {
        return out;
    }
    for (s, &scale) in DESCRIPTOR_SCALES.iter().enumerate() {
        let r = radius * scale;
        let hood: Vec<usize> = all.iter().filter(|(_, d)| *d <= r).map(|x| x.0).collect();
        if hood.is_empty() {
            continue;
        }
        let n = hood.len() as f64 + 1.0;
        let mean = (hood.iter().map(|&j| pts[j]).sum::<Vector3<f64>>() + center) / n;
        let mut cov = (center - mean) * (center - mean).transpose();
        for &j in &hood {
            let d = pts[j] - mean;
            cov += d * d.transpose();
        }
        let cov: Matrix3<f64> = cov / n;
        let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt() / r).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let base = s * PER_SCALE;
        for k in 0..3 {
            out[base + k] = SHAPE_WEIGHT * eig[k];
        }
        out[base + 3] = SHAPE_WEIGHT * (mean - center).norm() / r;
    }
    let hist = PER_SCALE * DESCRIPTOR_SCALES.len();
    let near: Vec<f64> = all.iter().map(|x| x.1).filter(|&d| d <= radius).collect();
    out[hist] = (near.len() as f64).ln_1p();
    let mut counts = [0.0; HISTOGRAM_BINS];
    for d in near {
        let x = d / radius * (HISTOGRAM_BINS - 1) as f64;
        let k = (x.floor() as usize).min(HISTOGRAM_BINS - 1);
        let f = x - k as f64;
        counts[k] += 1.0 - f;
        if k + 1 < HISTOGRAM_BINS {
            counts[k + 1] += f;
        }
    }
    for (k, c) in counts.iter().enumerate() {
        out[hist + 1 + k] = c.sqrt();
    }
    out
}
