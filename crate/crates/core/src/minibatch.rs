//! Mini-batch graph matching over subsets of the overlap region.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::affinity::{fine_affinities, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::ot::{fgm_solve, Marginals, SolverConfig};
use crate::rng::substream;

/// Batch size used when none is configured.
pub const DEFAULT_BATCH: usize = 128;

/// Index lists into P and Q for one batch.
pub type Subset = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub enum Pairing {
    /// P and Q subsets drawn independently.
    Independent,
    /// Subsets drawn as ground-truth matched pairs `(i, j)`, so every sampled
    /// row has its partner in the same batch.
    Matched(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchConfig {
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub alpha: f64,
    pub pairing: Pairing,
    pub solver: SolverConfig,
}

impl Default for MiniBatchConfig {
    fn default() -> Self {
        MiniBatchConfig {
            m: DEFAULT_BATCH,
            k: 8,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            pairing: Pairing::Independent,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchPlan {
    pub global_gamma: DMatrix<f64>,
    pub k: usize,
    pub m: usize,
    pub subset_indices: Vec<Subset>,
}

impl MiniBatchPlan {
    /// Distinct rows of P that appear in at least one batch, ascending.
    pub fn sampled_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.subset_indices.iter().flat_map(|(r, _)| r.iter().copied()).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// Column of the largest entry in row `i`, lowest index on ties.
    pub fn row_argmax(&self, i: usize) -> usize {
        let row = self.global_gamma.row(i);
        (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
    }
}

fn draw(pool: &[usize], m: usize, seed: u64, stream: &str, index: usize) -> Vec<usize> {
    let mut rng = substream(seed, stream, index as u64);
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), m).into_iter().map(|k| pool[k]).collect();
    picked.sort_unstable();
    picked
}

/// `k` independent uniform draws of `m` elements without replacement from
/// each index pool.
pub fn sample_subsets(p_idx: &[usize], q_idx: &[usize], m: usize, k: usize, seed: u64) -> Result<Vec<Subset>> {
    let available = p_idx.len().min(q_idx.len());
    if available < m {
        return Err(Error::OverlapTooSmall { available, batch: m });
    }
    Ok((0..k)
        .map(|b| (draw(p_idx, m, seed, "batch-p", b), draw(q_idx, m, seed, "batch-q", b)))
        .collect())
}

/// `k` draws of `m` matched pairs; the P and Q lists keep pair order.
pub fn sample_matched_subsets(pairs: &[(usize, usize)], m: usize, k: usize, seed: u64) -> Result<Vec<Subset>> {
    if pairs.len() < m {
        return Err(Error::OverlapTooSmall { available: pairs.len(), batch: m });
    }
    Ok((0..k)
        .map(|b| {
            let mut rng = substream(seed, "batch-pairs", b as u64);
            let mut picks = sample(&mut rng, pairs.len(), m).into_vec();
            picks.sort_unstable();
            picks.iter().map(|&t| pairs[t]).unzip()
        })
        .collect())
}

/// Solves every batch with `fgm_solve` under uniform marginals and averages
/// the plans, each embedded at its global indices.
pub fn minibatch_from_subsets(
    p: &PointCloud,
    q: &PointCloud,
    subsets: Vec<Subset>,
    alpha: f64,
    solver: &SolverConfig,
) -> Result<MiniBatchPlan> {
    let k = subsets.len();
    let m = subsets.first().map_or(0, |s| s.0.len());
    if k == 0 || m == 0 {
        return Err(Error::invalid("need at least one non-empty batch"));
    }
    for (rows, cols) in &subsets {
        if rows.len() != m || cols.len() != m {
            return Err(Error::shape(format!("batches of {m}"), format!("{} x {}", rows.len(), cols.len())));
        }
        if rows.iter().any(|&i| i >= p.len()) || cols.iter().any(|&j| j >= q.len()) {
            return Err(Error::invalid("batch index out of range"));
        }
    }
    let marginals = Marginals::uniform(m, m)?;
    let plans: Vec<DMatrix<f64>> = subsets
        .par_iter()
        .map(|(rows, cols)| {
            let costs = fine_affinities(&p.select(rows), &q.select(cols), alpha)?;
            Ok(fgm_solve(&costs, &marginals, solver)?.gamma)
        })
        .collect::<Result<_>>()?;
    let mut global = DMatrix::zeros(p.len(), q.len());
    let w = 1.0 / k as f64;
    for ((rows, cols), plan) in subsets.iter().zip(&plans) {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                global[(i, j)] += w * plan[(a, b)];
            }
        }
    }
    Ok(MiniBatchPlan { global_gamma: global, k, m, subset_indices: subsets })
}

/// Mini-batch plan over the points flagged in `mask_p` and `mask_q`.
pub fn minibatch_gm(
    p: &PointCloud,
    q: &PointCloud,
    mask_p: &[bool],
    mask_q: &[bool],
    cfg: &MiniBatchConfig,
) -> Result<MiniBatchPlan> {
    if mask_p.len() != p.len() || mask_q.len() != q.len() {
        return Err(Error::shape(
            format!("masks of {} and {}", p.len(), q.len()),
            format!("{} and {}", mask_p.len(), mask_q.len()),
        ));
    }
    if cfg.k == 0 || cfg.m == 0 {
        return Err(Error::invalid("batch size and count must be positive"));
    }
    let subsets = match &cfg.pairing {
        Pairing::Independent => {
            let pick = |mask: &[bool]| mask.iter().enumerate().filter(|x| *x.1).map(|x| x.0).collect::<Vec<_>>();
            sample_subsets(&pick(mask_p), &pick(mask_q), cfg.m, cfg.k, cfg.seed)?
        }
        Pairing::Matched(pairs) => {
            let kept: Vec<(usize, usize)> = pairs
                .iter()
                .copied()
                .filter(|&(i, j)| mask_p.get(i) == Some(&true) && mask_q.get(j) == Some(&true))
                .collect();
            sample_matched_subsets(&kept, cfg.m, cfg.k, cfg.seed)?
        }
    };
    minibatch_from_subsets(p, q, subsets, cfg.alpha, &cfg.solver)
}
