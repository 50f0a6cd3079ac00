//! End-to-end registration: features, coarse partial matching for overlap
//! estimation, confidence sampling and RANSAC.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::affinity::{coarse_affinities, CostMatrices, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sampling, KdTree, PointCloud};
use crate::ot::{pgm_proximal, Marginals, SolverConfig};
use crate::registration::{
    compute_metrics, confidence_sample, ransac_register, MetricMode, RansacConfig, RegistrationResult,
    SamplingConfig, DEFAULT_ITERS, INDOOR_INLIER_THRESH,
};
use crate::rng::derive_seed;
use crate::synth::{feature_scale, local_descriptor, oracle_features, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureProvider {
    /// Ground-truth-aligned coordinates with Gaussian noise, in units of the
    /// median point spacing.
    Oracle { dim: usize, noise: f64 },
    /// Rigid-invariant local descriptor with the given radius in meters.
    Descriptor { dim: usize, radius: f64 },
}

impl Default for FeatureProvider {
    fn default() -> Self {
        FeatureProvider::Descriptor { dim: 32, radius: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub features: FeatureProvider,
    /// Super points per cloud for the coarse matching.
    pub super_points: usize,
    /// Transported mass `s` of the coarse partial matching.
    pub mass: f64,
    pub alpha: f64,
    pub solver: SolverConfig,
    /// Weight confidences by the estimated overlap; otherwise all scores are one.
    pub overlap_filter: bool,
    pub n_samples: usize,
    pub sampling: SamplingConfig,
    pub inlier_thresh: f64,
    pub ransac_iters: usize,
    pub mode: MetricMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            features: FeatureProvider::default(),
            super_points: 64,
            mass: 0.5,
            alpha: DEFAULT_ALPHA,
            solver: SolverConfig::default(),
            overlap_filter: true,
            n_samples: 1000,
            sampling: SamplingConfig::default(),
            inlier_thresh: INDOOR_INLIER_THRESH,
            ransac_iters: DEFAULT_ITERS,
            mode: MetricMode::Indoor,
            seed: 0,
        }
    }
}

/// Attaches features to both clouds of a scene.
pub fn attach_features(scene: &Scene, provider: &FeatureProvider, seed: u64) -> Result<(PointCloud, PointCloud)> {
    match *provider {
        FeatureProvider::Oracle { dim, noise } => {
            let sigma = noise * feature_scale(&scene.q);
            oracle_features(&scene.p, &scene.q, &scene.gt, dim, sigma, derive_seed(seed, "features", 0))
        }
        FeatureProvider::Descriptor { dim, radius } => {
            let s = derive_seed(seed, "features", 0);
            Ok((local_descriptor(&scene.p, radius, dim, s)?, local_descriptor(&scene.q, radius, dim, s)?))
        }
    }
}

/// Super points by farthest point sampling, each carrying the mean feature of
/// its Voronoi cell. Returns the pooled cloud and the cell of every point.
pub fn pool_super_points(cloud: &PointCloud, k: usize) -> Result<(PointCloud, Vec<usize>)> {
    let features = cloud.features().ok_or(Error::Missing("features"))?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let centers = farthest_point_sampling(cloud, k);
    let sup = cloud.select(&centers);
    let tree = KdTree::new(sup.points());
    let cell: Vec<usize> = cloud.points().iter().map(|x| tree.nearest(x).map_or(0, |(c, _)| c)).collect();
    let mut pooled = DMatrix::zeros(centers.len(), features.ncols());
    let mut counts = vec![0usize; centers.len()];
    for (i, &c) in cell.iter().enumerate() {
        let mut row = pooled.row_mut(c);
        row += features.row(i);
        counts[c] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        pooled.row_mut(c).scale_mut(1.0 / n.max(1) as f64);
    }
    let sup = sup.with_features(pooled)?.with_overlap_scores(vec![1.0; centers.len()])?;
    Ok((sup, cell))
}

/// Divides both feature sets by the median row norm of their union, so that
/// the entropic regularization acts on unit-scale costs.
fn rescale_features(p: PointCloud, q: PointCloud) -> Result<(PointCloud, PointCloud)> {
    let (fp, fq) = (p.features().ok_or(Error::Missing("features"))?, q.features().ok_or(Error::Missing("features"))?);
    let mut norms: Vec<f64> = fp.row_iter().chain(fq.row_iter()).map(|r| r.norm()).collect();
    norms.sort_by(f64::total_cmp);
    let median = norms[norms.len() / 2];
    if !(median > 0.0) {
        return Ok((p, q));
    }
    let (fp, fq) = (fp / median, fq / median);
    Ok((p.with_features(fp)?, q.with_features(fq)?))
}

/// Coarse problem: super-point affinities with rescaled features, plus the
/// super point of every fine point in `p` and `q`.
pub fn coarse_costs(p: &PointCloud, q: &PointCloud, cfg: &PipelineConfig) -> Result<(CostMatrices, Vec<usize>, Vec<usize>)> {
    let (sp, cell_p) = pool_super_points(p, cfg.super_points)?;
    let (sq, cell_q) = pool_super_points(q, cfg.super_points)?;
    let (sp, sq) = rescale_features(sp, sq)?;
    Ok((coarse_affinities(&sp, &sq, cfg.alpha)?, cell_p, cell_q))
}

/// Per-point overlap scores from partial graph matching of the super points:
/// the matched fraction of each super point's mass, spread over its cell.
pub fn estimate_overlap(p: &PointCloud, q: &PointCloud, cfg: &PipelineConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let (costs, cell_p, cell_q) = coarse_costs(p, q, cfg)?;
    let marginals = Marginals::uniform_partial(costs.rows(), costs.cols(), cfg.mass)?;
    let plan = pgm_proximal(&costs, &marginals, &cfg.solver)?;
    let (rp, rq) = plan.matching_scores();
    Ok((cell_p.iter().map(|&c| rp[c]).collect(), cell_q.iter().map(|&c| rq[c]).collect()))
}

/// Registers two feature-bearing clouds; `metrics` is left empty.
pub fn register(p: &PointCloud, q: &PointCloud, cfg: &PipelineConfig) -> Result<RegistrationResult> {
    let fp = p.features().ok_or(Error::Missing("features on P"))?;
    let fq = q.features().ok_or(Error::Missing("features on Q"))?;
    let (op, oq) = if cfg.overlap_filter {
        estimate_overlap(p, q, cfg)?
    } else {
        (vec![1.0; p.len()], vec![1.0; q.len()])
    };
    let corr = confidence_sample(fp, fq, &op, &oq, cfg.n_samples, cfg.seed, &cfg.sampling)?;
    let ransac = RansacConfig { inlier_thresh: cfg.inlier_thresh, iters: cfg.ransac_iters, seed: cfg.seed };
    ransac_register(&corr, p, q, &ransac)
}

/// Attaches features, registers and scores a synthetic scene.
pub fn register_scene(scene: &Scene, cfg: &PipelineConfig) -> Result<RegistrationResult> {
    let (p, q) = attach_features(scene, &cfg.features, cfg.seed)?;
    let mut result = register(&p, &q, cfg)?;
    result.metrics = Some(compute_metrics(&result.transform, &scene.gt, &scene.p, &scene.q, &scene.gt_corr, cfg.mode)?);
    Ok(result)
}
