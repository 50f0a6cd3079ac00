use nalgebra::{Matrix3, Vector3};

use super::RigidTransform;
use crate::error::{Error, Result};

/// Relative singular-value floor below which the cross-covariance is treated
/// as rank-deficient (collinear or coincident points).
const RANK_TOL: f64 = 1e-10;

/// Weighted least-squares rigid transform mapping `src` onto `dst`.
///
/// Minimizes `sum_i w_i |R src_i + t - dst_i|^2` over proper rotations. The
/// rotation comes from the SVD of the weighted cross-covariance with the usual
/// reflection correction, so the result is the global minimizer.
pub fn kabsch_fit(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    weights: &[f64],
) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::shape(
            format!("{} source, target and weight entries", src.len()),
            format!("{} targets, {} weights", dst.len(), weights.len()),
        ));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let effective = weights.iter().filter(|&&w| w > 0.0).count();
    if effective < 3 {
        return Err(Error::DegenerateFit);
    }
    let total: f64 = weights.iter().sum();

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        src_mean += s * w;
        dst_mean += d * w;
    }
    src_mean /= total;
    dst_mean /= total;

    let mut cov = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        cov += (d - dst_mean) * (s - src_mean).transpose() * w;
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateFit),
    };
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return Err(Error::DegenerateFit);
    }

    // cov = U S V^T with cov = sum (d)(s)^T, so R = U D V^T.
    // The reflection fix flips the smallest singular direction; nalgebra does
    // not guarantee the singular values come out sorted.
    let sign = (u * v_t).determinant().signum();
    let smallest = (0..3)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap_or(2);
    let mut diag = Vector3::repeat(1.0);
    diag[smallest] = sign;

    let rotation = u * Matrix3::from_diagonal(&diag) * v_t;
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

/// Weighted sum of squared residuals of `transform` on the pairs.
pub fn weighted_residual(
    transform: &RigidTransform,
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    weights: &[f64],
) -> f64 {
    src.iter()
        .zip(dst)
        .zip(weights)
        .map(|((s, d), w)| w * (transform.apply(s) - d).norm_squared())
        .sum()
}
