//! Training losses with analytic gradients, and a central-difference checker.
//!
//! Gradients flow into the loss inputs only (features and scores); they are
//! keyed by input name so that [`total_loss`] can merge components that share
//! an input.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub const DELTA_P: f64 = 0.1;
pub const DELTA_N: f64 = 1.4;
pub const DEFAULT_GAMMA: f64 = 10.0;
pub const LAMBDA_C: f64 = 1.0;
pub const LAMBDA_F: f64 = 1.0;
/// Scores are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the logs.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_ANCHORS: usize = 128;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

pub const COARSE_FEATURES_P: &str = "coarse_features_p";
pub const COARSE_FEATURES_Q: &str = "coarse_features_q";
pub const COARSE_SCORES_P: &str = "coarse_scores_p";
pub const COARSE_SCORES_Q: &str = "coarse_scores_q";
pub const FINE_SCORES_P: &str = "fine_scores_p";
pub const FINE_SCORES_Q: &str = "fine_scores_q";
pub const OVERLAP_SCORES_P: &str = "overlap_scores_p";
pub const OVERLAP_SCORES_Q: &str = "overlap_scores_q";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossValue {
    pub value: f64,
    pub gradients: BTreeMap<String, DMatrix<f64>>,
}

impl LossValue {
    pub fn gradient(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.gradients.get(name)
    }

    fn scaled_into(&self, weight: f64, out: &mut LossValue) {
        out.value += weight * self.value;
        for (name, g) in &self.gradients {
            out.gradients
                .entry(name.clone())
                .and_modify(|acc| *acc += g * weight)
                .or_insert_with(|| g * weight);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleParams {
    pub gamma: f64,
    pub delta_p: f64,
    pub delta_n: f64,
}

impl Default for CircleParams {
    fn default() -> Self {
        CircleParams { gamma: DEFAULT_GAMMA, delta_p: DELTA_P, delta_n: DELTA_N }
    }
}

/// One anchor of the circle loss: indices refer to the anchor's own cloud
/// (`index`) and to the other cloud (`positives`, `negatives`). Each positive
/// carries its patch overlap ratio `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleAnchor {
    pub index: usize,
    pub positives: Vec<(usize, f64)>,
    pub negatives: Vec<usize>,
}

/// Builds anchors for one direction from pairwise anchor distances and patch
/// overlap ratios (`dist`, `overlap` are `N × M`, rows are anchors).
///
/// Pairs with overlap of at least 10% are positive when within `r_p`; pairs
/// with no overlap are negative when farther than `r_n`; the rest are dropped.
/// Anchors without positives are skipped and at most `n_p` are kept, sampled
/// uniformly without replacement.
pub fn circle_anchors(
    dist: &DMatrix<f64>,
    overlap: &DMatrix<f64>,
    r_p: f64,
    r_n: f64,
    n_p: usize,
    seed: u64,
) -> Result<Vec<CircleAnchor>> {
    if dist.shape() != overlap.shape() {
        return Err(Error::shape(format!("{:?}", dist.shape()), format!("{:?}", overlap.shape())));
    }
    let mut anchors: Vec<CircleAnchor> = (0..dist.nrows())
        .map(|i| CircleAnchor {
            index: i,
            positives: (0..dist.ncols())
                .filter(|&j| overlap[(i, j)] >= 0.1 && dist[(i, j)] <= r_p)
                .map(|j| (j, overlap[(i, j)]))
                .collect(),
            negatives: (0..dist.ncols()).filter(|&j| overlap[(i, j)] == 0.0 && dist[(i, j)] > r_n).collect(),
        })
        .filter(|a| !a.positives.is_empty())
        .collect();
    if anchors.len() > n_p {
        let mut rng = rng_from_seed(seed);
        let mut keep: Vec<usize> = sample(&mut rng, anchors.len(), n_p).into_vec();
        keep.sort_unstable();
        anchors = keep.into_iter().map(|k| anchors[k].clone()).collect();
    }
    Ok(anchors)
}

/// `log(1 + Σ eᵃ)` and the softmax weights `eᵃ / (1 + Σ eᵃ)`.
fn log1p_sum_exp(exponents: &[f64]) -> (f64, Vec<f64>) {
    let max = exponents.iter().copied().fold(0.0_f64, f64::max);
    let denom = (-max).exp() + exponents.iter().map(|a| (a - max).exp()).sum::<f64>();
    let value = max + denom.ln();
    let weights = exponents.iter().map(|a| ((a - max).exp()) / denom).collect();
    (value, weights)
}

/// Mean anchor term for one direction, adding its gradient (times `scale`)
/// into `g_anchor` / `g_other`.
fn circle_direction(
    f_anchor: &DMatrix<f64>,
    f_other: &DMatrix<f64>,
    anchors: &[CircleAnchor],
    params: &CircleParams,
    scale: f64,
    g_anchor: &mut DMatrix<f64>,
    g_other: &mut DMatrix<f64>,
) -> Result<f64> {
    let used: Vec<&CircleAnchor> = anchors.iter().filter(|a| !a.positives.is_empty()).collect();
    if used.is_empty() {
        return Ok(0.0);
    }
    let per = scale / used.len() as f64;
    let mut total = 0.0;
    for a in used {
        if a.index >= f_anchor.nrows() {
            return Err(Error::invalid(format!("anchor index {} out of range", a.index)));
        }
        let mut others = Vec::with_capacity(a.positives.len() + a.negatives.len());
        let mut exps = Vec::with_capacity(others.capacity());
        let mut slopes = Vec::with_capacity(others.capacity());
        for &(j, lambda) in &a.positives {
            let d = pair_distance(f_anchor, a.index, f_other, j)?;
            others.push((j, d));
            exps.push(lambda * params.gamma * (d - params.delta_p));
            slopes.push(lambda * params.gamma);
        }
        for &k in &a.negatives {
            let d = pair_distance(f_anchor, a.index, f_other, k)?;
            others.push((k, d));
            exps.push(params.gamma * (params.delta_n - d));
            slopes.push(-params.gamma);
        }
        let (value, weights) = log1p_sum_exp(&exps);
        total += value;
        for (((j, d), w), slope) in others.into_iter().zip(weights).zip(slopes) {
            if d == 0.0 {
                continue;
            }
            let dir = (f_anchor.row(a.index) - f_other.row(j)) / d;
            let coeff = per * w * slope;
            let mut ga = g_anchor.row_mut(a.index);
            ga += &dir * coeff;
            let mut go = g_other.row_mut(j);
            go -= &dir * coeff;
        }
    }
    Ok(total * per / scale)
}

fn pair_distance(fa: &DMatrix<f64>, i: usize, fb: &DMatrix<f64>, j: usize) -> Result<f64> {
    if j >= fb.nrows() {
        return Err(Error::invalid(format!("pair index {j} out of range")));
    }
    Ok((fa.row(i) - fb.row(j)).norm())
}

/// Overlap-aware circle loss, averaged over both directions.
pub fn circle_loss(
    fp: &DMatrix<f64>,
    fq: &DMatrix<f64>,
    p_anchors: &[CircleAnchor],
    q_anchors: &[CircleAnchor],
    params: &CircleParams,
) -> Result<LossValue> {
    if fp.ncols() != fq.ncols() {
        return Err(Error::shape(format!("feature width {}", fp.ncols()), fq.ncols().to_string()));
    }
    let mut gp = DMatrix::zeros(fp.nrows(), fp.ncols());
    let mut gq = DMatrix::zeros(fq.nrows(), fq.ncols());
    let lp = circle_direction(fp, fq, p_anchors, params, 0.5, &mut gp, &mut gq)?;
    let lq = circle_direction(fq, fp, q_anchors, params, 0.5, &mut gq, &mut gp)?;
    let mut gradients = BTreeMap::new();
    gradients.insert(COARSE_FEATURES_P.to_string(), gp);
    gradients.insert(COARSE_FEATURES_Q.to_string(), gq);
    Ok(LossValue { value: 0.5 * (lp + lq), gradients })
}

/// Mean binary cross-entropy of clamped scores, with its gradient.
fn bce(scores: &[f64], labels: &[u8]) -> Result<(f64, DMatrix<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} labels", scores.len()), labels.len().to_string()));
    }
    if scores.is_empty() {
        return Ok((0.0, DMatrix::zeros(0, 1)));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let n = scores.len() as f64;
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(scores.len(), 1);
    for (k, (&s, &y)) in scores.iter().zip(labels).enumerate() {
        let c = s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let y = y as f64;
        value -= y * c.ln() + (1.0 - y) * (1.0 - c).ln();
        if s == c {
            grad[(k, 0)] = (-y / c + (1.0 - y) / (1.0 - c)) / n;
        }
    }
    Ok((value / n, grad))
}

fn symmetric_bce(
    names: (&str, &str),
    scores_p: &[f64],
    labels_p: &[u8],
    scores_q: &[f64],
    labels_q: &[u8],
) -> Result<LossValue> {
    let (lp, gp) = bce(scores_p, labels_p)?;
    let (lq, gq) = bce(scores_q, labels_q)?;
    let mut gradients = BTreeMap::new();
    gradients.insert(names.0.to_string(), gp * 0.5);
    gradients.insert(names.1.to_string(), gq * 0.5);
    Ok(LossValue { value: 0.5 * (lp + lq), gradients })
}

/// Cross-entropy on coarse matching scores against overlap labels.
pub fn cpgm_loss(scores_p: &[f64], labels_p: &[u8], scores_q: &[f64], labels_q: &[u8]) -> Result<LossValue> {
    symmetric_bce((COARSE_SCORES_P, COARSE_SCORES_Q), scores_p, labels_p, scores_q, labels_q)
}

/// Cross-entropy on fine mini-batch matching scores.
pub fn mbm_loss(scores_p: &[f64], labels_p: &[u8], scores_q: &[f64], labels_q: &[u8]) -> Result<LossValue> {
    symmetric_bce((FINE_SCORES_P, FINE_SCORES_Q), scores_p, labels_p, scores_q, labels_q)
}

/// Cross-entropy on predicted overlap probabilities.
pub fn overlap_loss(scores_p: &[f64], labels_p: &[u8], scores_q: &[f64], labels_q: &[u8]) -> Result<LossValue> {
    symmetric_bce((OVERLAP_SCORES_P, OVERLAP_SCORES_Q), scores_p, labels_p, scores_q, labels_q)
}

/// Labels that are 1 where the ratio exceeds `threshold`.
pub fn threshold_labels(ratios: &[f64], threshold: f64) -> Vec<u8> {
    ratios.iter().map(|&r| u8::from(r > threshold)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossComponents {
    pub coc: LossValue,
    pub cpgm: LossValue,
    pub mbm: LossValue,
    pub overlap: LossValue,
}

/// `λc (coc + cpgm) + λf (mbm + overlap)`.
pub fn total_loss(c: &LossComponents, lambda_c: f64, lambda_f: f64) -> LossValue {
    let mut out = LossValue::default();
    c.coc.scaled_into(lambda_c, &mut out);
    c.cpgm.scaled_into(lambda_c, &mut out);
    c.mbm.scaled_into(lambda_f, &mut out);
    c.overlap.scaled_into(lambda_f, &mut out);
    out
}

/// Largest relative deviation `|g_fd − g| / max(1, |g|)` between the
/// analytic gradient and central differences with step `h`.
pub fn finite_difference_check<F>(f: F, x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (_, grad) = f(x)?;
    if grad.len() != x.len() {
        return Err(Error::shape(format!("{} gradient entries", x.len()), grad.len().to_string()));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let (up, _) = f(&probe)?;
        probe[k] = x[k] - h;
        let (down, _) = f(&probe)?;
        probe[k] = x[k];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(1.0));
    }
    Ok(worst)
}

/// Random circle-loss instance: features for `n` and `m` super points and
/// five anchors per direction.
#[derive(Debug, Clone)]
pub struct CircleInstance {
    pub fp: DMatrix<f64>,
    pub fq: DMatrix<f64>,
    pub p_anchors: Vec<CircleAnchor>,
    pub q_anchors: Vec<CircleAnchor>,
}

impl CircleInstance {
    pub fn random(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let (n, m, b) = (8, 7, 6);
        let fp = DMatrix::from_fn(n, b, |_, _| rng.random::<f64>() - 0.5);
        let fq = DMatrix::from_fn(m, b, |_, _| rng.random::<f64>() - 0.5);
        let mut anchors = |own: usize, other: usize| -> Vec<CircleAnchor> {
            (0..5)
                .map(|k| {
                    let mut cols: Vec<usize> = sample(&mut rng, other, 4).into_vec();
                    let negatives = cols.split_off(2);
                    CircleAnchor {
                        index: k % own,
                        positives: cols.into_iter().map(|j| (j, rng.random_range(0.1..1.0))).collect(),
                        negatives,
                    }
                })
                .collect()
        };
        let p_anchors = anchors(n, m);
        let q_anchors = anchors(m, n);
        CircleInstance { fp, fq, p_anchors, q_anchors }
    }

    pub fn loss(&self, params: &CircleParams) -> Result<LossValue> {
        circle_loss(&self.fp, &self.fq, &self.p_anchors, &self.q_anchors, params)
    }

    /// Flattened `(fp, fq)` and the matching evaluation closure.
    pub fn check(&self, params: &CircleParams, h: f64) -> Result<f64> {
        let (n, b) = self.fp.shape();
        let m = self.fq.nrows();
        let mut x: Vec<f64> = self.fp.iter().copied().collect();
        x.extend(self.fq.iter().copied());
        finite_difference_check(
            |x| {
                let fp = DMatrix::from_column_slice(n, b, &x[..n * b]);
                let fq = DMatrix::from_column_slice(m, b, &x[n * b..]);
                let l = circle_loss(&fp, &fq, &self.p_anchors, &self.q_anchors, params)?;
                let mut g: Vec<f64> = l.gradients[COARSE_FEATURES_P].iter().copied().collect();
                g.extend(l.gradients[COARSE_FEATURES_Q].iter().copied());
                Ok((l.value, g))
            },
            &x,
            h,
        )
    }
}

type BceFn = fn(&[f64], &[u8], &[f64], &[u8]) -> Result<LossValue>;

fn bce_check(loss: BceFn, names: (&str, &str), seed: u64, h: f64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let (n, m) = (9, 11);
    // Keep scores away from the clamp so the checked function is smooth.
    let x: Vec<f64> = (0..n + m).map(|_| rng.random_range(0.05..0.95)).collect();
    let lp: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let lq: Vec<u8> = (0..m).map(|_| rng.random_range(0..2)).collect();
    finite_difference_check(
        |x| {
            let l = loss(&x[..n], &lp, &x[n..], &lq)?;
            let mut g: Vec<f64> = l.gradients[names.0].iter().copied().collect();
            g.extend(l.gradients[names.1].iter().copied());
            Ok((l.value, g))
        },
        &x,
        h,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub loss: &'static str,
    pub instances: usize,
    pub max_error: f64,
}

/// Worst finite-difference error of each loss over `instances` seeded random
/// inputs.
pub fn gradient_check_suite(instances: usize, seed: u64, h: f64) -> Result<Vec<GradCheck>> {
    let params = CircleParams::default();
    let mut worst = [0.0_f64; 4];
    for k in 0..instances as u64 {
        worst[0] = worst[0].max(CircleInstance::random(derive_seed(seed, "circle", k)).check(&params, h)?);
        worst[1] = worst[1].max(bce_check(cpgm_loss, (COARSE_SCORES_P, COARSE_SCORES_Q), derive_seed(seed, "cpgm", k), h)?);
        worst[2] = worst[2].max(bce_check(mbm_loss, (FINE_SCORES_P, FINE_SCORES_Q), derive_seed(seed, "mbm", k), h)?);
        worst[3] = worst[3].max(bce_check(overlap_loss, (OVERLAP_SCORES_P, OVERLAP_SCORES_Q), derive_seed(seed, "overlap", k), h)?);
    }
    Ok(["circle", "cpgm", "mbm", "overlap"]
        .into_iter()
        .zip(worst)
        .map(|(loss, max_error)| GradCheck { loss, instances, max_error })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_features(ds: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        // Anchor at the origin; other points on the x axis at the given distances.
        let fp = DMatrix::zeros(1, 2);
        let fq = DMatrix::from_fn(ds.len(), 2, |j, c| if c == 0 { ds[j] } else { 0.0 });
        (fp, fq)
    }

    #[test]
    fn zero_margin_positives() {
        let (fp, fq) = line_features(&[DELTA_P, DELTA_P, DELTA_P]);
        let a = CircleAnchor { index: 0, positives: vec![(0, 0.7), (1, 0.3), (2, 1.0)], negatives: vec![] };
        let l = circle_loss(&fp, &fq, &[a.clone()], &[], &CircleParams::default()).unwrap();
        // Only the P direction has anchors, so the symmetric loss halves it.
        assert_relative_eq!(l.value, 0.5 * 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_negative_at_margin_gives_log_two() {
        let (fp, fq) = line_features(&[0.0, DELTA_N]);
        let a = CircleAnchor { index: 0, positives: vec![(0, 1.0)], negatives: vec![1] };
        let params = CircleParams { gamma: 500.0, ..CircleParams::default() };
        let l = circle_loss(&fp, &fq, &[a.clone()], &[], &params).unwrap();
        assert_relative_eq!(l.value, 0.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn anchors_without_positives_are_excluded() {
        let (fp, fq) = line_features(&[0.5]);
        let a = CircleAnchor { index: 0, positives: vec![], negatives: vec![0] };
        let l = circle_loss(&fp, &fq, &[a.clone()], &[a], &CircleParams::default()).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn circle_gradients_match_finite_differences() {
        for seed in 0..20 {
            let err = CircleInstance::random(seed).check(&CircleParams::default(), DEFAULT_FD_STEP).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn coarse_step_is_caught() {
        let err = CircleInstance::random(3).check(&CircleParams::default(), 1.0).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn circle_is_anchor_order_invariant() {
        let inst = CircleInstance::random(5);
        let mut reversed = inst.clone();
        reversed.p_anchors.reverse();
        reversed.q_anchors.reverse();
        let a = inst.loss(&CircleParams::default()).unwrap();
        let b = reversed.loss(&CircleParams::default()).unwrap();
        assert_relative_eq!(a.value, b.value, epsilon = 1e-12);
    }

    #[test]
    fn bce_extremes() {
        for loss in [cpgm_loss as BceFn, mbm_loss, overlap_loss] {
            let l = loss(&[0.5; 4], &[1, 0, 1, 1], &[0.5; 3], &[0, 0, 1]).unwrap();
            assert_relative_eq!(l.value, 2f64.ln(), epsilon = 1e-12);
            let perfect = loss(&[1.0, 0.0], &[1, 0], &[0.0], &[0]).unwrap();
            assert!(perfect.value >= 0.0 && perfect.value <= 1e-6);
            // Saturated scores sit in the clamp and carry no gradient.
            assert!(perfect.gradients.values().all(|g| g.iter().all(|&x| x == 0.0)));
        }
    }

    #[test]
    fn bce_gradients_match_finite_differences() {
        for seed in 0..20 {
            assert!(bce_check(cpgm_loss, (COARSE_SCORES_P, COARSE_SCORES_Q), seed, DEFAULT_FD_STEP).unwrap() < 1e-4);
            assert!(bce_check(overlap_loss, (OVERLAP_SCORES_P, OVERLAP_SCORES_Q), seed, DEFAULT_FD_STEP).unwrap() < 1e-4);
        }
    }

    #[test]
    fn quadratic_fd_is_exact() {
        let err = finite_difference_check(
            |x| Ok((x.iter().enumerate().map(|(k, v)| (k as f64 + 1.0) * v * v).sum(), x.iter().enumerate().map(|(k, v)| 2.0 * (k as f64 + 1.0) * v).collect())),
            &[0.3, -1.2, 2.5],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-9);
    }

    fn components() -> LossComponents {
        let inst = CircleInstance::random(1);
        LossComponents {
            coc: inst.loss(&CircleParams::default()).unwrap(),
            cpgm: cpgm_loss(&[0.2, 0.9], &[0, 1], &[0.6], &[1]).unwrap(),
            mbm: mbm_loss(&[0.3], &[1], &[0.4, 0.8], &[0, 1]).unwrap(),
            overlap: overlap_loss(&[0.7], &[1], &[0.1], &[0]).unwrap(),
        }
    }

    #[test]
    fn total_loss_weights() {
        let c = components();
        let plain = total_loss(&c, LAMBDA_C, LAMBDA_F);
        assert_relative_eq!(plain.value, c.coc.value + c.cpgm.value + c.mbm.value + c.overlap.value, epsilon = 1e-12);
        let fine = total_loss(&c, 0.0, 1.0);
        assert_relative_eq!(fine.value, c.mbm.value + c.overlap.value, epsilon = 1e-12);
        let lc = 0.7;
        let diff = total_loss(&c, 2.0 * lc, 1.0).value - total_loss(&c, lc, 1.0).value;
        assert!((diff - lc * (c.coc.value + c.cpgm.value)).abs() < 1e-12);
        assert_eq!(plain.gradients.len(), 8);
        assert_eq!(plain.gradients[FINE_SCORES_Q], c.mbm.gradients[FINE_SCORES_Q]);
    }

    #[test]
    fn anchor_builder() {
        let dist = DMatrix::from_row_slice(3, 3, &[0.01, 0.5, 2.0, 0.3, 0.02, 3.0, 5.0, 5.0, 5.0]);
        let overlap = DMatrix::from_row_slice(3, 3, &[0.8, 0.0, 0.0, 0.05, 0.4, 0.0, 0.0, 0.0, 0.0]);
        let anchors = circle_anchors(&dist, &overlap, 0.05, 0.1, 128, 0).unwrap();
        assert_eq!(anchors.len(), 2);
        assert_eq!(anchors[0].positives, vec![(0, 0.8)]);
        assert_eq!(anchors[0].negatives, vec![1, 2]);
        assert_eq!(anchors[1].negatives, vec![2]);
        assert_eq!(circle_anchors(&dist, &overlap, 0.05, 0.1, 1, 0).unwrap().len(), 1);
    }

    #[test]
    fn suite_passes() {
        for check in gradient_check_suite(20, 0, DEFAULT_FD_STEP).unwrap() {
            assert!(check.max_error < 1e-4, "{check:?}");
        }
    }
}
