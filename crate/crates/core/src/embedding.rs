//! Forward pass of the geometric structure embedding and the
//! self/cross attention layers, with externally supplied weights.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng as _;
use rand_distr::Uniform;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud};
use crate::rng::rng_from_seed;

pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_SIGMA_D: f64 = 0.2;
pub const DEFAULT_SIGMA_A: f64 = 15.0 * std::f64::consts::PI / 180.0;
pub const DEFAULT_NEIGHBORS: usize = 3;

const FREQ_BASE: f64 = 10_000.0;

/// Channel `2t` is `sin(x / 10000^(2t/b))`, channel `2t+1` the matching cosine.
pub fn sinusoidal_embed(x: f64, b: usize) -> Result<RowDVector<f64>> {
    if b < 2 || b % 2 != 0 {
        return Err(Error::invalid(format!("embedding dimension must be even and at least 2, got {b}")));
    }
    Ok(RowDVector::from_fn(b, |_, c| {
        let t = (c / 2) as f64;
        let arg = x / FREQ_BASE.powf(2.0 * t / b as f64);
        if c % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wg: DMatrix<f64>,
    pub wd: DMatrix<f64>,
    pub wa: DMatrix<f64>,
}

impl AttentionWeights {
    /// Matrices in the order `Wq, Wk, Wv, Wg, Wd, Wa`.
    pub fn from_matrices(mut mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != 6 {
            return Err(Error::shape("6 weight matrices", mats.len().to_string()));
        }
        let b = mats[0].nrows();
        for m in &mats {
            if m.shape() != (b, b) {
                return Err(Error::shape(format!("{b}x{b}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("weight matrix has non-finite entries"));
            }
        }
        let wa = mats.pop().unwrap_or_default();
        let wd = mats.pop().unwrap_or_default();
        let wg = mats.pop().unwrap_or_default();
        let wv = mats.pop().unwrap_or_default();
        let wk = mats.pop().unwrap_or_default();
        let wq = mats.pop().unwrap_or_default();
        Ok(AttentionWeights { wq, wk, wv, wg, wd, wa })
    }

    /// Entries drawn from `uniform(−1/√b, 1/√b)`.
    pub fn random(b: usize, seed: u64) -> Self {
        let bound = 1.0 / (b as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = rng_from_seed(seed);
        let mut draw = || DMatrix::from_fn(b, b, |_, _| rng.sample(dist));
        AttentionWeights { wq: draw(), wk: draw(), wv: draw(), wg: draw(), wd: draw(), wa: draw() }
    }

    pub fn zeros(b: usize) -> Self {
        let z = DMatrix::zeros(b, b);
        AttentionWeights { wq: z.clone(), wk: z.clone(), wv: z.clone(), wg: z.clone(), wd: z.clone(), wa: z }
    }

    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }

    pub fn to_matrices(&self) -> [&DMatrix<f64>; 6] {
        [&self.wq, &self.wk, &self.wv, &self.wg, &self.wd, &self.wa]
    }
}

/// Pairwise embeddings `r_ij` for all ordered pairs, including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricEmbedding {
    /// Row `i * n + j` holds `r_ij`.
    r: DMatrix<f64>,
    n: usize,
    pub sigma_d: f64,
    pub sigma_a: f64,
    pub k_neighbors: usize,
}

impl GeometricEmbedding {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.r.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> RowDVector<f64> {
        self.r.row(i * self.n + j).into_owned()
    }

    /// Embeddings of the pairs `(i, 0..n)` stacked as an `n × b` matrix.
    fn block(&self, i: usize) -> DMatrix<f64> {
        self.r.rows(i * self.n, self.n).into_owned()
    }
}

/// Unsigned angle between two vectors; zero when either has zero length.
fn angle(a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> f64 {
    let cross = a.cross(b).norm();
    let dot = a.dot(b);
    if cross == 0.0 && dot == 0.0 {
        0.0
    } else {
        cross.atan2(dot)
    }
}

pub fn geometric_structure_embedding(
    cloud: &PointCloud,
    weights: &AttentionWeights,
    sigma_d: f64,
    sigma_a: f64,
    k: usize,
) -> Result<GeometricEmbedding> {
    let n = cloud.len();
    if n < k + 1 {
        return Err(Error::invalid(format!("embedding with {k} neighbors needs at least {} points, got {n}", k + 1)));
    }
    if !(sigma_d > 0.0 && sigma_a > 0.0) {
        return Err(Error::invalid("sigma_d and sigma_a must be positive"));
    }
    let b = weights.dim();
    sinusoidal_embed(0.0, b)?;
    let pts = cloud.points();
    let tree = KdTree::new(pts);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            tree.k_nearest(&pts[i], k + 1)
                .into_iter()
                .map(|(j, _)| j)
                .filter(|&j| j != i)
                .take(k)
                .collect()
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let neighbors = &neighbors[i];
            (0..n).map(move |j| {
                let d = (pts[j] - pts[i]).norm();
                let dist_term = sinusoidal_embed(d / sigma_d, b).expect("checked dimension") * &weights.wd;
                let to_j = pts[j] - pts[i];
                let mut angle_term = RowDVector::from_element(b, f64::NEG_INFINITY);
                for &x in neighbors {
                    let rho = if i == j { 0.0 } else { angle(&(pts[x] - pts[i]), &to_j) };
                    let proj = sinusoidal_embed(rho / sigma_a, b).expect("checked dimension") * &weights.wa;
                    angle_term.zip_apply(&proj, |a, p| *a = a.max(p));
                }
                if neighbors.is_empty() {
                    angle_term.fill(0.0);
                }
                (dist_term + angle_term).iter().copied().collect()
            })
        })
        .collect();
    let r = DMatrix::from_fn(n * n, b, |row, c| rows[row][c]);
    Ok(GeometricEmbedding { r, n, sigma_d, sigma_a, k_neighbors: k })
}

fn check_features(features: &DMatrix<f64>, b: usize, what: &str) -> Result<()> {
    if features.ncols() != b {
        return Err(Error::shape(format!("{what} of width {b}"), format!("width {}", features.ncols())));
    }
    Ok(())
}

/// Numerically stable softmax of each row, in place.
fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        row.iter_mut().for_each(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Row-stochastic attention matrix of the geometric self-attention layer:
/// softmax over `j` of `(x_i Wq)(x_j Wk + r_ij Wg)ᵀ / √b`.
pub fn self_attention_scores(
    features: &DMatrix<f64>,
    emb: &GeometricEmbedding,
    weights: &AttentionWeights,
) -> Result<DMatrix<f64>> {
    let b = weights.dim();
    check_features(features, b, "features")?;
    if features.nrows() != emb.len() {
        return Err(Error::shape(format!("{} feature rows", emb.len()), features.nrows().to_string()));
    }
    if emb.dim() != b {
        return Err(Error::shape(format!("embedding width {b}"), emb.dim().to_string()));
    }
    let n = features.nrows();
    let queries = features * &weights.wq;
    let keys = features * &weights.wk;
    let scale = 1.0 / (b as f64).sqrt();
    let rows: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let geo = emb.block(i) * &weights.wg;
            let keyed = &keys + geo;
            keyed * queries.row(i).transpose() * scale
        })
        .collect();
    let mut logits = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    softmax_rows(&mut logits);
    Ok(logits)
}

pub fn geometric_self_attention(
    features: &DMatrix<f64>,
    emb: &GeometricEmbedding,
    weights: &AttentionWeights,
) -> Result<DMatrix<f64>> {
    let a = self_attention_scores(features, emb, weights)?;
    Ok(a * (features * &weights.wv))
}

/// Row-stochastic cross-attention matrix: softmax over `j` of
/// `(zP_i Wq)(zQ_j Wk)ᵀ / √b`.
pub fn cross_attention_scores(zp: &DMatrix<f64>, zq: &DMatrix<f64>, weights: &AttentionWeights) -> Result<DMatrix<f64>> {
    let b = weights.dim();
    check_features(zp, b, "source features")?;
    check_features(zq, b, "target features")?;
    let mut logits = (zp * &weights.wq) * (zq * &weights.wk).transpose() / (b as f64).sqrt();
    softmax_rows(&mut logits);
    Ok(logits)
}

pub fn cross_attention(zp: &DMatrix<f64>, zq: &DMatrix<f64>, weights: &AttentionWeights) -> Result<DMatrix<f64>> {
    let a = cross_attention_scores(zp, zq, weights)?;
    Ok(a * (zq * &weights.wv))
}

/// Self, cross (both directions), self.
pub fn interleaved_attention(
    fp: &DMatrix<f64>,
    fq: &DMatrix<f64>,
    emb_p: &GeometricEmbedding,
    emb_q: &GeometricEmbedding,
    weights: &AttentionWeights,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sp = geometric_self_attention(fp, emb_p, weights)?;
    let sq = geometric_self_attention(fq, emb_q, weights)?;
    let cp = cross_attention(&sp, &sq, weights)?;
    let cq = cross_attention(&sq, &sp, weights)?;
    Ok((
        geometric_self_attention(&cp, emb_p, weights)?,
        geometric_self_attention(&cq, emb_q, weights)?,
    ))
}
