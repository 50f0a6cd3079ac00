//! Correspondence sampling, RANSAC pose estimation and registration metrics.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kabsch_fit, CorrespondenceSet, Point, PointCloud, RigidTransform};
use crate::rng::substream;

pub const DEFAULT_ITERS: usize = 50_000;
pub const INDOOR_INLIER_THRESH: f64 = 0.05;
pub const OUTDOOR_INLIER_THRESH: f64 = 0.30;
pub const INDOOR_RMSE_THRESH: f64 = 0.2;
pub const KITTI_RRE_THRESH_DEG: f64 = 5.0;
pub const KITTI_RTE_THRESH: f64 = 2.0;
pub const DEFAULT_TEMPERATURE: f64 = 1e-3;
/// RANSAC iterations per independently seeded chunk.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Softmax temperature τ.
    pub temperature: f64,
    /// L2-normalize feature rows before comparing them.
    pub normalize: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { temperature: DEFAULT_TEMPERATURE, normalize: true }
    }
}

/// Confidence `softmax_j(−‖f_i − g_j‖² / 2τ) · o_i · o_j` for all pairs.
///
/// On L2-normalized rows the softmax argument equals `(cos θ_ij − 1) / τ`, so
/// this is the row softmax of the normalized inner products at temperature τ.
pub fn confidence_matrix(
    fp: &DMatrix<f64>,
    fq: &DMatrix<f64>,
    op: &[f64],
    oq: &[f64],
    cfg: &SamplingConfig,
) -> Result<DMatrix<f64>> {
    if fp.ncols() != fq.ncols() {
        return Err(Error::shape(format!("feature width {}", fp.ncols()), fq.ncols().to_string()));
    }
    if op.len() != fp.nrows() || oq.len() != fq.nrows() {
        return Err(Error::shape(
            format!("{} and {} overlap scores", fp.nrows(), fq.nrows()),
            format!("{} and {}", op.len(), oq.len()),
        ));
    }
    if !(cfg.temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let prep = |f: &DMatrix<f64>| {
        let mut f = f.clone();
        if cfg.normalize {
            for mut row in f.row_iter_mut() {
                let n = row.norm();
                if n > 0.0 {
                    row /= n;
                }
            }
        }
        f
    };
    let (a, b) = (prep(fp), prep(fq));
    let sq_b: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let cross = &a * b.transpose();
    let rows: Vec<Vec<f64>> = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let sq_a = a.row(i).norm_squared();
            let logits: Vec<f64> = (0..b.nrows())
                .map(|j| -(sq_a + sq_b[j] - 2.0 * cross[(i, j)]).max(0.0) / (2.0 * cfg.temperature))
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.iter().zip(oq).map(|(e, o)| e / sum * op[i] * o).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| rows[i][j]))
}

/// Samples `n_samples` distinct pairs with probability proportional to their
/// confidence, as sequential draws without replacement would.
pub fn confidence_sample(
    fp: &DMatrix<f64>,
    fq: &DMatrix<f64>,
    op: &[f64],
    oq: &[f64],
    n_samples: usize,
    seed: u64,
    cfg: &SamplingConfig,
) -> Result<CorrespondenceSet> {
    if n_samples < 3 {
        return Err(Error::invalid(format!("need at least 3 samples, got {n_samples}")));
    }
    let conf = confidence_matrix(fp, fq, op, oq, cfg)?;
    sample_pairs(&conf, n_samples, seed)
}

/// Weighted sampling without replacement by exponential keys: the pairs
/// with the `n` smallest `E_k / w_k`, `E_k ~ Exp(1)`, follow the law of
/// successive renormalized draws.
pub fn sample_pairs(conf: &DMatrix<f64>, n: usize, seed: u64) -> Result<CorrespondenceSet> {
    let (rows, cols) = conf.shape();
    let mut rng = substream(seed, "sampler", 0);
    let mut keyed: Vec<(f64, usize)> = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let w = conf[(i, j)];
            // Draw for every entry so the stream does not depend on zeros.
            let u: f64 = rng.random();
            if w > 0.0 && w.is_finite() {
                keyed.push((-(1.0 - u).ln() / w, i * cols + j));
            }
        }
    }
    if keyed.is_empty() {
        return Err(Error::NoConfidentCorrespondences);
    }
    let take = n.min(keyed.len());
    keyed.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.truncate(take);
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let pairs: Vec<(usize, usize)> = keyed.iter().map(|&(_, k)| (k / cols, k % cols)).collect();
    let confidences = pairs.iter().map(|&(i, j)| conf[(i, j)]).collect();
    CorrespondenceSet::new(pairs, Some(confidences), rows, cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub inlier_thresh: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig { inlier_thresh: INDOOR_INLIER_THRESH, iters: DEFAULT_ITERS, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    Indoor,
    Kitti,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rre_deg: f64,
    pub rte_m: f64,
    pub rmse_m: f64,
    pub rr: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub correspondences: CorrespondenceSet,
    pub inlier_mask: Vec<bool>,
    /// Filled in when a ground truth is available.
    pub metrics: Option<Metrics>,
}

impl RegistrationResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&x| x).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    inliers: usize,
    rmse: f64,
    iteration: usize,
    transform: RigidTransform,
}

impl Hypothesis {
    /// More inliers, then lower inlier RMSE, then earlier iteration.
    fn beats(&self, other: &Hypothesis) -> bool {
        other
            .inliers
            .cmp(&self.inliers)
            .then(self.rmse.total_cmp(&other.rmse))
            .then(self.iteration.cmp(&other.iteration))
            .is_lt()
    }
}

fn score(t: &RigidTransform, src: &[Point], dst: &[Point], thresh: f64) -> (usize, f64) {
    let mut count = 0;
    let mut sq = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let e = (t.apply(s) - d).norm_squared();
        if e <= thresh * thresh {
            count += 1;
            sq += e;
        }
    }
    let rmse = if count > 0 { (sq / count as f64).sqrt() } else { f64::INFINITY };
    (count, rmse)
}

/// Best hypothesis among the first `iters` draws of every chunk stream.
fn best_hypothesis(src: &[Point], dst: &[Point], cfg: &RansacConfig) -> Option<Hypothesis> {
    let chunks = cfg.iters.div_ceil(CHUNK);
    let n = src.len();
    (0..chunks)
        .into_par_iter()
        .filter_map(|c| {
            let mut rng = substream(cfg.seed, "ransac", c as u64);
            let end = ((c + 1) * CHUNK).min(cfg.iters);
            let mut best: Option<Hypothesis> = None;
            for iteration in c * CHUNK..end {
                let picks = rand::seq::index::sample(&mut rng, n, 3);
                let (s, d): (Vec<Point>, Vec<Point>) = picks.iter().map(|k| (src[k], dst[k])).unzip();
                let Ok(t) = kabsch_fit(&s, &d, &[1.0; 3]) else { continue };
                let (inliers, rmse) = score(&t, src, dst, cfg.inlier_thresh);
                let h = Hypothesis { inliers, rmse, iteration, transform: t };
                if best.as_ref().is_none_or(|b| h.beats(b)) {
                    best = Some(h);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.beats(&a) { b } else { a })
}

/// Number of inliers of the best hypothesis, before the final refit.
pub fn ransac_best_inliers(corr: &CorrespondenceSet, p: &PointCloud, q: &PointCloud, cfg: &RansacConfig) -> Result<usize> {
    let (src, dst) = endpoints(corr, p, q)?;
    Ok(best_hypothesis(&src, &dst, cfg).map_or(0, |h| h.inliers))
}

fn endpoints(corr: &CorrespondenceSet, p: &PointCloud, q: &PointCloud) -> Result<(Vec<Point>, Vec<Point>)> {
    if corr.len() < 3 {
        return Err(Error::invalid(format!("RANSAC needs at least 3 correspondences, got {}", corr.len())));
    }
    let mut src = Vec::with_capacity(corr.len());
    let mut dst = Vec::with_capacity(corr.len());
    for &(i, j) in corr.pairs() {
        match (p.points().get(i), q.points().get(j)) {
            (Some(a), Some(b)) => {
                src.push(*a);
                dst.push(*b);
            }
            _ => return Err(Error::invalid(format!("correspondence ({i}, {j}) out of range"))),
        }
    }
    Ok((src, dst))
}

/// Hypothesize-and-verify rigid estimation from 3-point minimal samples,
/// followed by a uniform-weight refit on the best inlier set.
pub fn ransac_register(
    corr: &CorrespondenceSet,
    p: &PointCloud,
    q: &PointCloud,
    cfg: &RansacConfig,
) -> Result<RegistrationResult> {
    if !(cfg.inlier_thresh > 0.0) {
        return Err(Error::invalid("inlier threshold must be positive"));
    }
    let (src, dst) = endpoints(corr, p, q)?;
    let best = best_hypothesis(&src, &dst, cfg).ok_or(Error::NoValidHypothesis)?;
    let mask = |t: &RigidTransform| -> Vec<bool> {
        src.iter().zip(&dst).map(|(s, d)| (t.apply(s) - d).norm() <= cfg.inlier_thresh).collect()
    };
    let best_mask = mask(&best.transform);
    let (s_in, d_in): (Vec<Point>, Vec<Point>) =
        src.iter().zip(&dst).zip(&best_mask).filter(|(_, &m)| m).map(|((s, d), _)| (*s, *d)).unzip();
    let transform = kabsch_fit(&s_in, &d_in, &vec![1.0; s_in.len()]).unwrap_or(best.transform);
    let inlier_mask = mask(&transform);
    Ok(RegistrationResult { transform, correspondences: corr.clone(), inlier_mask, metrics: None })
}

/// Geodesic rotation error in degrees.
pub fn rotation_error_deg(est: &RigidTransform, gt: &RigidTransform) -> f64 {
    let c = ((est.rotation.transpose() * gt.rotation).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn compute_metrics(
    est: &RigidTransform,
    gt: &RigidTransform,
    p: &PointCloud,
    q: &PointCloud,
    gt_corr: &CorrespondenceSet,
    mode: MetricMode,
) -> Result<Metrics> {
    let rre_deg = rotation_error_deg(est, gt);
    let rte_m = (est.translation - gt.translation).norm();
    let rmse_m = if gt_corr.is_empty() {
        if p.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let sq: f64 = p.points().iter().map(|x| (est.apply(x) - gt.apply(x)).norm_squared()).sum();
        (sq / p.len() as f64).sqrt()
    } else {
        let (src, dst) = endpoints_any(gt_corr, p, q)?;
        let sq: f64 = src.iter().zip(&dst).map(|(s, d)| (est.apply(s) - d).norm_squared()).sum();
        (sq / src.len() as f64).sqrt()
    };
    let rr = match mode {
        MetricMode::Indoor => rmse_m < INDOOR_RMSE_THRESH,
        MetricMode::Kitti => rre_deg < KITTI_RRE_THRESH_DEG && rte_m < KITTI_RTE_THRESH,
    };
    Ok(Metrics { rre_deg, rte_m, rmse_m, rr })
}

fn endpoints_any(corr: &CorrespondenceSet, p: &PointCloud, q: &PointCloud) -> Result<(Vec<Point>, Vec<Point>)> {
    corr.pairs()
        .iter()
        .map(|&(i, j)| match (p.points().get(i), q.points().get(j)) {
            (Some(a), Some(b)) => Ok((*a, *b)),
            _ => Err(Error::invalid(format!("correspondence ({i}, {j}) out of range"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}
