//! Intra- and inter-graph cost matrices and the linearized Gromov-Wasserstein
//! cost used inside the proximal solvers.
//!
//! Features are compared with plain Euclidean distances; no normalization is
//! applied here.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

/// Geometric weight used for both optimizer levels unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrices {
    /// Intra-graph costs of P (N x N).
    pub cp: DMatrix<f64>,
    /// Intra-graph costs of Q (M x M).
    pub cq: DMatrix<f64>,
    /// Inter-graph costs (N x M).
    pub cpq: DMatrix<f64>,
    pub alpha: f64,
}

impl CostMatrices {
    pub fn new(cp: DMatrix<f64>, cq: DMatrix<f64>, cpq: DMatrix<f64>, alpha: f64) -> Result<Self> {
        if !cp.is_square() || !cq.is_square() {
            return Err(Error::shape("square intra-graph matrices", format!("{:?} and {:?}", cp.shape(), cq.shape())));
        }
        if cpq.shape() != (cp.nrows(), cq.nrows()) {
            return Err(Error::shape(
                format!("{}x{} inter-graph matrix", cp.nrows(), cq.nrows()),
                format!("{}x{}", cpq.nrows(), cpq.ncols()),
            ));
        }
        if cp.iter().chain(cq.iter()).chain(cpq.iter()).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("cost entries must be finite and non-negative"));
        }
        Ok(CostMatrices { cp, cq, cpq, alpha })
    }

    pub fn rows(&self) -> usize {
        self.cp.nrows()
    }

    pub fn cols(&self) -> usize {
        self.cq.nrows()
    }

    /// Restrict to a subset of P rows and Q columns.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CostMatrices {
        CostMatrices {
            cp: DMatrix::from_fn(rows.len(), rows.len(), |a, b| self.cp[(rows[a], rows[b])]),
            cq: DMatrix::from_fn(cols.len(), cols.len(), |a, b| self.cq[(cols[a], cols[b])]),
            cpq: DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.cpq[(rows[a], cols[b])]),
            alpha: self.alpha,
        }
    }
}

fn row_distance(f: &DMatrix<f64>, i: usize, g: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..f.ncols() {
        let d = f[(i, c)] - g[(j, c)];
        s += d * d;
    }
    s.sqrt()
}

fn intra(points: &[Point], feats: &DMatrix<f64>, weights: Option<&[f64]>, alpha: f64) -> DMatrix<f64> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let w = weights.map_or(1.0, |o| o[i] * o[j]);
                    row_distance(feats, i, feats, j) + w * alpha * (points[i] - points[j]).norm()
                })
                .collect()
        })
        .collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    // Symmetric by construction up to rounding in the two evaluation orders.
    for i in 0..n {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

fn inter(fp: &DMatrix<f64>, fq: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (fp.nrows(), fq.nrows());
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..m).map(|j| row_distance(fp, i, fq, j)).collect())
        .collect();
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn features_of<'a>(cloud: &'a PointCloud, side: &str) -> Result<&'a DMatrix<f64>> {
    cloud.features().ok_or_else(|| {
        Error::Missing(if side == "P" { "features on P" } else { "features on Q" })
    })
}

fn check_dims(fp: &DMatrix<f64>, fq: &DMatrix<f64>) -> Result<()> {
    if fp.ncols() != fq.ncols() {
        return Err(Error::shape(
            format!("feature width {}", fp.ncols()),
            format!("width {}", fq.ncols()),
        ));
    }
    Ok(())
}

/// Super-point affinities: feature distance plus an overlap-weighted
/// geometric term `o_i o_j alpha |p_i - p_j|`.
pub fn coarse_affinities(p: &PointCloud, q: &PointCloud, alpha: f64) -> Result<CostMatrices> {
    let fp = features_of(p, "P")?;
    let fq = features_of(q, "Q")?;
    check_dims(fp, fq)?;
    let op = p.overlap_scores().ok_or(Error::Missing("overlap scores on P"))?;
    let oq = q.overlap_scores().ok_or(Error::Missing("overlap scores on Q"))?;
    Ok(CostMatrices {
        cp: intra(p.points(), fp, Some(op), alpha),
        cq: intra(q.points(), fq, Some(oq), alpha),
        cpq: inter(fp, fq),
        alpha,
    })
}

/// Fine-level affinities: feature distance plus `alpha |p_i - p_j|`.
pub fn fine_affinities(p: &PointCloud, q: &PointCloud, alpha: f64) -> Result<CostMatrices> {
    let fp = features_of(p, "P")?;
    let fq = features_of(q, "Q")?;
    check_dims(fp, fq)?;
    Ok(CostMatrices {
        cp: intra(p.points(), fp, None, alpha),
        cq: intra(q.points(), fq, None, alpha),
        cpq: inter(fp, fq),
        alpha,
    })
}

/// Linearized quadratic cost `L(Γ)` for the loss `½(a - b)²`:
///
/// `L = ½ (Cp∘Cp) r 1ᵀ + ½ 1 cᵀ (Cq∘Cq)ᵀ − Cp Γ Cqᵀ`, with `r`, `c` the row and
/// column masses of `Γ`. Entry `(i, j)` equals
/// `Σ_{k,l} ½ (Cp[i,k] − Cq[j,l])² Γ[k,l]`.
pub fn gw_linearized_cost(costs: &CostMatrices, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = (costs.rows(), costs.cols());
    if gamma.shape() != (n, m) {
        return Err(Error::shape(format!("{n}x{m} plan"), format!("{}x{}", gamma.nrows(), gamma.ncols())));
    }
    let row_mass = gamma.column_sum();
    let col_mass = gamma.row_sum().transpose();
    let cp2 = costs.cp.component_mul(&costs.cp);
    let cq2 = costs.cq.component_mul(&costs.cq);
    let a = &cp2 * &row_mass * 0.5;
    let b = &cq2 * &col_mass * 0.5;
    let cross = &costs.cp * gamma * costs.cq.transpose();
    Ok(DMatrix::from_fn(n, m, |i, j| a[i] + b[j] - cross[(i, j)]))
}

/// `⟨Cpq, Γ⟩ + ⟨L(Γ), Γ⟩`: the partial graph-matching objective.
pub fn gw_objective(costs: &CostMatrices, gamma: &DMatrix<f64>) -> Result<f64> {
    let l = gw_linearized_cost(costs, gamma)?;
    Ok(costs.cpq.dot(gamma) + l.dot(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use nalgebra::Vector3;
    use rand::Rng;

    fn cloud_with_features(n: usize, b: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        let pts = (0..n)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let f = DMatrix::from_fn(n, b, |_, _| rng.random::<f64>());
        PointCloud::new(pts).with_features(f).unwrap()
    }

    /// Explicit quadruple loop over `½(Cp[i,k] − Cq[j,l])² Γ[k,l]`.
    fn brute_force_linearized(c: &CostMatrices, g: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = g.shape();
        DMatrix::from_fn(n, m, |i, j| {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..m {
                    let d = c.cp[(i, k)] - c.cq[(j, l)];
                    s += 0.5 * d * d * g[(k, l)];
                }
            }
            s
        })
    }

    fn random_costs(n: usize, m: usize, seed: u64) -> CostMatrices {
        fine_affinities(&cloud_with_features(n, 4, seed), &cloud_with_features(m, 4, seed + 1), 0.5).unwrap()
    }

    #[test]
    fn decomposition_matches_quadruple_loop() {
        let mut rng = rng_from_seed(40);
        for n in 1..=6 {
            for m in 1..=8 {
                let c = random_costs(n, m, (n * 10 + m) as u64);
                let g = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
                let fast = gw_linearized_cost(&c, &g).unwrap();
                let slow = brute_force_linearized(&c, &g);
                assert!((fast - slow).abs().max() < 1e-10, "{n}x{m}");
            }
        }
    }

    #[test]
    fn zero_costs_or_zero_plan_give_zero() {
        let c = CostMatrices::new(DMatrix::zeros(3, 3), DMatrix::zeros(4, 4), DMatrix::zeros(3, 4), 0.0).unwrap();
        let g = DMatrix::from_element(3, 4, 1.0 / 12.0);
        assert_eq!(gw_linearized_cost(&c, &g).unwrap(), DMatrix::zeros(3, 4));
        let c = random_costs(3, 4, 2);
        assert_eq!(gw_linearized_cost(&c, &DMatrix::zeros(3, 4)).unwrap(), DMatrix::zeros(3, 4));
        assert!(gw_linearized_cost(&c, &DMatrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn intra_matrices_symmetric_zero_diagonal() {
        let c = random_costs(7, 5, 3);
        for m in [&c.cp, &c.cq] {
            assert_eq!(m, &m.transpose());
            assert!(m.diagonal().iter().all(|&x| x == 0.0));
            assert!(m.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn coarse_with_zero_scores_and_equal_features_vanishes() {
        let mut p = cloud_with_features(4, 3, 4);
        p.set_features(DMatrix::from_element(4, 3, 0.7)).unwrap();
        let p = p.with_overlap_scores(vec![0.0; 4]).unwrap();
        let c = coarse_affinities(&p, &p, 1.0).unwrap();
        assert_eq!(c.cp, DMatrix::zeros(4, 4));
    }

    #[test]
    fn alpha_zero_leaves_feature_distances() {
        let p = cloud_with_features(5, 3, 5);
        let c = fine_affinities(&p, &p, 0.0).unwrap();
        let f = p.features().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((c.cp[(i, j)] - (f.row(i) - f.row(j)).norm()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coarse_hand_computed_instance() {
        // P: three points on the x axis at 0, 1, 3; 1-D features 0, 2, 2.
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0)];
        let p = PointCloud::new(pts)
            .with_features(DMatrix::from_column_slice(3, 1, &[0.0, 2.0, 2.0]))
            .unwrap()
            .with_overlap_scores(vec![1.0, 0.5, 0.25])
            .unwrap();
        let q = PointCloud::new(vec![Vector3::zeros(), Vector3::new(0.0, 2.0, 0.0)])
            .with_features(DMatrix::from_column_slice(2, 1, &[1.0, 5.0]))
            .unwrap()
            .with_overlap_scores(vec![1.0, 1.0])
            .unwrap();
        let c = coarse_affinities(&p, &q, 2.0).unwrap();
        // cp[0,1] = |0-2| + 1*0.5*2*1 = 3; cp[0,2] = 2 + 0.25*2*3 = 3.5; cp[1,2] = 0 + 0.125*2*2 = 0.5
        assert!((c.cp[(0, 1)] - 3.0).abs() < 1e-15);
        assert!((c.cp[(0, 2)] - 3.5).abs() < 1e-15);
        assert!((c.cp[(1, 2)] - 0.5).abs() < 1e-15);
        // cq[0,1] = 4 + 1*2*2 = 8
        assert!((c.cq[(0, 1)] - 8.0).abs() < 1e-15);
        // cpq = |fp_i - fq_j|
        let expect = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 1.0, 3.0, 1.0, 3.0]);
        assert_eq!(c.cpq, expect);
    }

    #[test]
    fn unit_scores_reduce_coarse_to_fine() {
        let p = cloud_with_features(6, 3, 6);
        let q = cloud_with_features(4, 3, 7);
        let fine = fine_affinities(&p, &q, 0.3).unwrap();
        let p1 = p.with_overlap_scores(vec![1.0; 6]).unwrap();
        let q1 = q.with_overlap_scores(vec![1.0; 4]).unwrap();
        assert_eq!(coarse_affinities(&p1, &q1, 0.3).unwrap(), fine);
    }

    #[test]
    fn geometric_term_scales_linearly() {
        let p = cloud_with_features(5, 2, 8);
        let zero_feat = |c: &PointCloud, s: f64| {
            PointCloud::new(c.points().iter().map(|x| x * s).collect())
                .with_features(DMatrix::zeros(c.len(), 2))
                .unwrap()
        };
        let base = fine_affinities(&zero_feat(&p, 1.0), &zero_feat(&p, 1.0), 0.01).unwrap();
        let scaled = fine_affinities(&zero_feat(&p, 3.0), &zero_feat(&p, 3.0), 0.01).unwrap();
        assert!((base.cp * 3.0 - scaled.cp).abs().max() < 1e-15);
    }

    #[test]
    fn identical_clouds_have_zero_cross_diagonal() {
        let p = cloud_with_features(6, 3, 9);
        let c = fine_affinities(&p, &p, DEFAULT_ALPHA).unwrap();
        assert!(c.cpq.diagonal().iter().all(|&x| x == 0.0));
        assert_eq!(c.alpha, 0.01);
    }

    #[test]
    fn missing_attributes_error() {
        let bare = PointCloud::new(vec![Vector3::zeros()]);
        assert!(fine_affinities(&bare, &bare, 0.1).is_err());
        let p = cloud_with_features(3, 2, 10);
        assert!(coarse_affinities(&p, &p, 0.1).is_err());
    }
}
